use std::collections::HashMap;

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const BOS_SURFACE: &str = "<s>";
pub const EOS_SURFACE: &str = "</s>";
pub const UNK_SURFACE: &str = "<unk>";

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    pub id: TokenId,
    pub surface: String,
}

/// Word-level vocabulary with dense ids.
///
/// Ids 0, 1 and 2 are reserved for bos, eos and unknown words; words follow
/// in the order given. Bos and the unknown id are never predicted, so the
/// model output space is eos plus the words.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    surfaces: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    pub const BOS: TokenId = 0;
    pub const EOS: TokenId = 1;
    pub const UNK: TokenId = 2;

    pub fn new<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut surfaces: Vec<String> =
            vec![BOS_SURFACE.into(), EOS_SURFACE.into(), UNK_SURFACE.into()];
        let mut index: HashMap<String, TokenId> = surfaces
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as TokenId))
            .collect();
        for w in words {
            let w = w.as_ref();
            if w.is_empty() || w.chars().any(char::is_whitespace) {
                return Err(Error::InvalidParameter(format!(
                    "vocabulary word {w:?} must be a non-empty whitespace-free string"
                )));
            }
            if !index.contains_key(w) {
                index.insert(w.to_string(), surfaces.len() as TokenId);
                surfaces.push(w.to_string());
            }
        }
        if surfaces.len() == 3 {
            return Err(Error::EmptyVocabulary);
        }
        Ok(Self { surfaces, index })
    }

    pub fn len(&self) -> usize {
        self.surfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfaces.is_empty()
    }

    pub fn bos_id(&self) -> TokenId {
        Self::BOS
    }

    pub fn eos_id(&self) -> TokenId {
        Self::EOS
    }

    pub fn unk_id(&self) -> TokenId {
        Self::UNK
    }

    pub fn id(&self, surface: &str) -> Option<TokenId> {
        self.index.get(surface).copied()
    }

    pub fn surface(&self, id: TokenId) -> Option<&str> {
        self.surfaces.get(id as usize).map(String::as_str)
    }

    /// Ids the model can emit: eos followed by every word id.
    pub fn output_ids(&self) -> impl Iterator<Item = TokenId> + '_ {
        std::iter::once(Self::EOS).chain(3..self.surfaces.len() as TokenId)
    }

    pub fn output_size(&self) -> usize {
        self.surfaces.len() - 2
    }

    pub fn is_output(&self, id: TokenId) -> bool {
        id == Self::EOS || (id >= 3 && (id as usize) < self.surfaces.len())
    }

    /// Splits on whitespace runs; unknown words map to the unknown id.
    pub fn tokenize(&self, text: &str) -> Vec<Token> {
        text.split_whitespace()
            .map(|w| {
                let id = self.id(w).unwrap_or(Self::UNK);
                Token {
                    id,
                    surface: self.surfaces[id as usize].clone(),
                }
            })
            .collect()
    }

    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        text.split_whitespace()
            .map(|w| self.id(w).unwrap_or(Self::UNK))
            .collect()
    }

    pub fn detokenize(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .map(|&id| self.surface(id).unwrap_or(UNK_SURFACE))
            .collect::<Vec<_>>()
            .join(" ")
    }
}
