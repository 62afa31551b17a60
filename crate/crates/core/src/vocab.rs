//! Fixed digit-level vocabulary for canonical formula strings.

use serde::{Deserialize, Serialize};

use crate::binio::content_hash;
use crate::formula::{Formula, StructureStats};
use crate::syntax::print;

pub type TokenId = u32;

const REGULAR: [&str; 29] = [
    "tt", "not", "and", "or", "F", "G", "U", "x_", "0", "1", "2", "3", "4", "5", "6", "7", "8",
    "9", ".", "-", "inf", ">=", "<=", "(", ")", "[", "]", ",", " ",
];
const N_RESERVED: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    pub unk: TokenId,
    pub pad: TokenId,
    pub bos: TokenId,
    pub eos: TokenId,
    /// Regular token ids ordered by decreasing string length, for greedy
    /// longest-match tokenization.
    by_length: Vec<TokenId>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::stl()
    }
}

impl Vocabulary {
    /// The 35 regular tokens (29 in use, 6 reserved) followed by the
    /// `unk`, `pad`, `bos` and `eos` special tokens.
    pub fn stl() -> Self {
        let mut tokens: Vec<String> = REGULAR.iter().map(|s| s.to_string()).collect();
        tokens.extend((0..N_RESERVED).map(|i| format!("<reserved_{i}>")));
        let n_regular = tokens.len() as TokenId;
        tokens.extend(["<unk>", "<pad>", "<bos>", "<eos>"].map(String::from));
        let mut by_length: Vec<TokenId> = (0..REGULAR.len() as TokenId).collect();
        by_length.sort_by_key(|&id| std::cmp::Reverse(tokens[id as usize].len()));
        Vocabulary {
            tokens,
            unk: n_regular,
            pad: n_regular + 1,
            bos: n_regular + 2,
            eos: n_regular + 3,
            by_length,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn n_regular(&self) -> usize {
        self.unk as usize
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.tokens.iter().position(|t| t == token).map(|i| i as TokenId)
    }

    pub fn is_special(&self, id: TokenId) -> bool {
        id >= self.unk
    }

    pub fn hash(&self) -> String {
        content_hash(self.tokens.join("\u{1f}").as_bytes())
    }

    /// Greedy longest-match tokenization; characters that start no token map
    /// to `unk`.
    pub fn tokenize(&self, text: &str) -> TokenSequence {
        let mut ids = Vec::with_capacity(text.len());
        let mut rest = text;
        'outer: while let Some(c) = rest.chars().next() {
            for &id in &self.by_length {
                let tok = &self.tokens[id as usize];
                if rest.starts_with(tok.as_str()) {
                    ids.push(id);
                    rest = &rest[tok.len()..];
                    continue 'outer;
                }
            }
            ids.push(self.unk);
            rest = &rest[c.len_utf8()..];
        }
        TokenSequence { ids }
    }

    /// Concatenates token strings. `bos`, `eos` and `pad` are dropped; `unk`
    /// and reserved ids render as their placeholder names.
    pub fn detokenize(&self, seq: &TokenSequence) -> String {
        let mut out = String::new();
        for &id in &seq.ids {
            if id == self.bos || id == self.eos || id == self.pad {
                continue;
            }
            out.push_str(self.token(id).unwrap_or("<unk>"));
        }
        out
    }

    /// `[bos] + tokens + [eos]` for a formula's canonical text.
    pub fn encode_formula(&self, f: &Formula) -> TokenSequence {
        let mut ids = vec![self.bos];
        ids.extend(self.tokenize(&print(f)).ids);
        ids.push(self.eos);
        TokenSequence { ids }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<TokenId>,
}

impl TokenSequence {
    pub fn new(ids: Vec<TokenId>) -> Self {
        TokenSequence { ids }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Ids within the vocabulary, at most one `eos`, and `bos` only at
    /// position 0.
    pub fn is_well_formed(&self, v: &Vocabulary) -> bool {
        self.ids.iter().all(|&id| (id as usize) < v.len())
            && self.ids.iter().filter(|&&id| id == v.eos).count() <= 1
            && self.ids.iter().skip(1).all(|&id| id != v.bos)
    }
}

/// Depth, node count and token count of a formula's canonical text.
pub fn structure_stats(f: &Formula, v: &Vocabulary) -> StructureStats {
    StructureStats {
        depth: f.depth(),
        n_nodes: f.n_nodes(),
        n_tokens: v.tokenize(&print(f)).len(),
    }
}
