//! Task vocabulary with a reserved padding index.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{ensure, usage};
use crate::Result;

/// Index reserved for padding. No token ever maps to it.
pub const PAD: u32 = 0;

/// Display name of the padding entry.
pub const PAD_TOKEN: &str = "<pad>";

/// Bijective token/index mapping. Index 0 is the padding slot and is not
/// reachable through [`Vocabulary::get`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: BTreeMap<String, u32>,
}

impl Vocabulary {
    /// Collects every distinct token in first-occurrence order.
    pub fn build<I, S, T>(corpora: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator<Item = T>,
        T: AsRef<str>,
    {
        let mut vocab = Self::empty();
        for sentence in corpora {
            for token in sentence {
                vocab.insert(token.as_ref());
            }
        }
        ensure!(vocab.len() > 1, "cannot build a vocabulary from an empty corpus");
        Ok(vocab)
    }

    /// Rebuilds a vocabulary from its non-padding tokens in index order.
    pub fn from_tokens<I, T>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<str>,
    {
        let mut vocab = Self::empty();
        for token in tokens {
            let token = token.as_ref();
            ensure!(vocab.get(token).is_none(), "duplicate token {token:?}");
            vocab.insert(token);
        }
        Ok(vocab)
    }

    fn empty() -> Self {
        Self {
            tokens: alloc::vec![PAD_TOKEN.to_string()],
            index: BTreeMap::new(),
        }
    }

    fn insert(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len() as u32;
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), id);
        id
    }

    /// Number of entries including the padding slot.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    /// True when only the padding slot exists.
    pub fn is_empty(&self) -> bool {
        self.tokens.len() == 1
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Non-padding tokens in index order (index `i + 1` for position `i`).
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.tokens[1..].iter().map(String::as_str)
    }

    /// Maps tokens to indices; every token must be known.
    pub fn encode<T: AsRef<str>>(&self, tokens: &[T]) -> Result<Vec<u32>> {
        tokens
            .iter()
            .map(|t| {
                self.get(t.as_ref())
                    .ok_or_else(|| usage!("token {:?} is not in the vocabulary", t.as_ref()))
            })
            .collect()
    }

    /// Maps tokens to indices, dropping unknown tokens. Returns the indices
    /// and the number of dropped tokens.
    pub fn encode_known<T: AsRef<str>>(&self, tokens: &[T]) -> (Vec<u32>, usize) {
        let ids: Vec<u32> = tokens.iter().filter_map(|t| self.get(t.as_ref())).collect();
        let dropped = tokens.len() - ids.len();
        (ids, dropped)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn first_occurrence_order() {
        let v = Vocabulary::build([vec!["a", "b"], vec!["b", "c"]]).unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(v.token(PAD), Some(PAD_TOKEN));
        assert_eq!(v.get("a"), Some(1));
        assert_eq!(v.get("b"), Some(2));
        assert_eq!(v.get("c"), Some(3));
    }

    #[test]
    fn single_and_duplicate_tokens() {
        let v = Vocabulary::build([vec!["x"]]).unwrap();
        assert_eq!((v.len(), v.get("x")), (2, Some(1)));
        let v = Vocabulary::build([vec!["a", "a"]]).unwrap();
        assert_eq!((v.len(), v.get("a")), (2, Some(1)));
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert!(Vocabulary::build(Vec::<Vec<&str>>::new()).is_err());
        assert!(Vocabulary::build([Vec::<&str>::new()]).is_err());
    }

    #[test]
    fn pad_name_is_an_ordinary_token() {
        let v = Vocabulary::build([vec![PAD_TOKEN]]).unwrap();
        assert_eq!(v.get(PAD_TOKEN), Some(1));
    }

    #[test]
    fn encode_and_restore() {
        let v = Vocabulary::build([vec!["dog", "cat"]]).unwrap();
        assert_eq!(v.encode(&["cat", "dog"]).unwrap(), [2, 1]);
        assert!(v.encode(&["cow"]).is_err());
        assert_eq!(v.encode_known(&["cow", "dog"]), (vec![1], 1));
        let restored = Vocabulary::from_tokens(v.tokens()).unwrap();
        assert_eq!(restored, v);
    }
}
