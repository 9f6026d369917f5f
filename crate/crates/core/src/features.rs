//! Sparse context features shared by the perceptron and the CRF emissions.
//!
//! Templates: lowercased forms at offsets -2..=2, word shape at -1..=1,
//! prefixes and suffixes of length 1 to 3, a bias, optional cluster-path
//! prefixes, and (perceptron only) the previous tag.

use std::collections::HashMap;
use std::io::BufRead;

use crate::error::{Error, Result};

const BOS: &str = "<s>";
const EOS: &str = "</s>";
const CLUSTER_PREFIXES: [usize; 3] = [4, 6, 10];

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeatureVector(pub Vec<String>);

impl FeatureVector {
    pub fn contains(&self, f: &str) -> bool {
        self.0.iter().any(|x| x == f)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Word-to-bit-path map, as produced by Brown clustering.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Clusters {
    paths: HashMap<String, String>,
}

impl Clusters {
    pub fn new(paths: HashMap<String, String>) -> Self {
        Clusters { paths }
    }

    /// Reads `surface<TAB>bitpath` lines.
    pub fn read_tsv<R: BufRead>(reader: R) -> Result<Self> {
        let mut paths = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (word, path) = line.split_once('\t').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: "expected surface<TAB>bitpath".into(),
            })?;
            let path = path.trim();
            if path.is_empty() || !path.chars().all(|c| c == '0' || c == '1') {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("bad bit path {path:?}"),
                });
            }
            paths.insert(word.to_string(), path.to_string());
        }
        Ok(Clusters { paths })
    }

    pub fn path(&self, word: &str) -> Option<&str> {
        self.paths.get(word).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.paths.iter().map(|(a, b)| (a.as_str(), b.as_str()))
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

/// Capitals become `X`, lowercase `x`, digits `d`; runs are collapsed.
pub fn word_shape(word: &str) -> String {
    let mut out = String::new();
    let mut last = None;
    for c in word.chars() {
        let m = if c.is_uppercase() {
            'X'
        } else if c.is_lowercase() {
            'x'
        } else if c.is_numeric() {
            'd'
        } else {
            c
        };
        if last != Some(m) {
            out.push(m);
            last = Some(m);
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureExtractor {
    clusters: Option<Clusters>,
}

impl FeatureExtractor {
    pub fn new(clusters: Option<Clusters>) -> Self {
        FeatureExtractor { clusters }
    }

    pub fn clusters(&self) -> Option<&Clusters> {
        self.clusters.as_ref()
    }

    /// Every feature that does not depend on neighbouring predictions.
    pub fn context_features<S: AsRef<str>>(&self, tokens: &[S], i: usize) -> Vec<String> {
        assert!(i < tokens.len(), "position {i} out of range");
        let at = |off: isize| -> String {
            let j = i as isize + off;
            if j < 0 {
                BOS.to_string()
            } else if j as usize >= tokens.len() {
                EOS.to_string()
            } else {
                tokens[j as usize].as_ref().to_lowercase()
            }
        };
        let shape_at = |off: isize| -> String {
            let j = i as isize + off;
            if j < 0 {
                BOS.to_string()
            } else if j as usize >= tokens.len() {
                EOS.to_string()
            } else {
                word_shape(tokens[j as usize].as_ref())
            }
        };

        let word = tokens[i].as_ref();
        let mut feats = Vec::with_capacity(24);
        feats.push("bias".to_string());
        for off in -2isize..=2 {
            feats.push(format!("w[{off}]={}", at(off)));
        }
        for off in -1isize..=1 {
            feats.push(format!("shape[{off}]={}", shape_at(off)));
        }
        let chars: Vec<char> = word.chars().collect();
        for n in 1..=3.min(chars.len()) {
            let prefix: String = chars[..n].iter().collect();
            let suffix: String = chars[chars.len() - n..].iter().collect();
            feats.push(format!("pre{n}={prefix}"));
            feats.push(format!("suf{n}={suffix}"));
        }
        if let Some(path) = self.clusters.as_ref().and_then(|c| c.path(word)) {
            for n in CLUSTER_PREFIXES {
                if path.len() > n {
                    feats.push(format!("bc{n}={}", &path[..n]));
                }
            }
            feats.push(format!("bc={path}"));
        }
        feats
    }

    /// Context features plus the previous predicted tag.
    pub fn extract<S: AsRef<str>>(&self, tokens: &[S], i: usize, prev_tag: &str) -> FeatureVector {
        let mut feats = self.context_features(tokens, i);
        feats.push(prev_tag_feature(prev_tag));
        FeatureVector(feats)
    }
}

pub fn prev_tag_feature(prev_tag: &str) -> String {
    format!("prev={prev_tag}")
}

/// Tag name used as the previous tag at sentence start.
pub const START_TAG: &str = "<START>";

/// Interns feature strings to dense ids in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureIndex {
    names: Vec<String>,
    ids: HashMap<String, u32>,
}

impl FeatureIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names(names: Vec<String>) -> Self {
        let ids = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i as u32))
            .collect();
        FeatureIndex { names, ids }
    }

    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_string());
        self.ids.insert(name.to_string(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.ids.get(name).copied()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes() {
        assert_eq!(word_shape("Arsenal"), "Xx");
        assert_eq!(word_shape("U.S."), "X.X.");
        assert_eq!(word_shape("1990s"), "dx");
        assert_eq!(word_shape("McDonald"), "XxXx");
    }

    #[test]
    fn arsenal_features() {
        let fx = FeatureExtractor::default();
        let toks = ["Arsenal", "coach", "Unai", "Emery"];
        let f = fx.extract(&toks, 0, START_TAG);
        assert!(f.contains("shape[0]=Xx"));
        assert!(f.contains("suf3=nal"));
        assert!(f.contains("pre3=Ars"));
        assert!(f.contains("w[0]=arsenal"));
        assert!(f.contains("w[1]=coach"));
        assert!(f.contains("shape[1]=x"));
        assert!(f.contains("prev=<START>"));
        assert!(f.contains("bias"));
        assert!(!f.0.iter().any(|x| x.starts_with("bc")));
    }

    #[test]
    fn boundary_sentinels() {
        let fx = FeatureExtractor::default();
        let toks = ["Unai", "Emery"];
        let f = fx.extract(&toks, 0, START_TAG);
        assert!(f.contains("w[-1]=<s>"));
        assert!(f.contains("w[-2]=<s>"));
        assert!(f.contains("shape[-1]=<s>"));
        let g = fx.extract(&toks, 1, "B-PER");
        assert!(g.contains("w[2]=</s>"));
        assert!(g.contains("w[-2]=<s>"));
        assert!(g.contains("prev=B-PER"));
    }

    #[test]
    fn extraction_is_deterministic() {
        let fx = FeatureExtractor::default();
        let toks = ["a", "B", "c"];
        assert_eq!(fx.extract(&toks, 1, "O"), fx.extract(&toks, 1, "O"));
    }

    #[test]
    fn short_words_get_fewer_affixes() {
        let fx = FeatureExtractor::default();
        let f = fx.extract(&["a"], 0, "O");
        assert!(f.contains("pre1=a"));
        assert!(!f.0.iter().any(|x| x.starts_with("pre2")));
    }

    #[test]
    fn cluster_prefixes() {
        let clusters =
            Clusters::read_tsv("Arsenal\t110100111011\nthe\t0010\n".as_bytes()).unwrap();
        let fx = FeatureExtractor::new(Some(clusters));
        let f = fx.extract(&["Arsenal"], 0, "O");
        assert!(f.contains("bc4=1101"));
        assert!(f.contains("bc6=110100"));
        assert!(f.contains("bc10=1101001110"));
        assert!(f.contains("bc=110100111011"));
        let g = fx.extract(&["the"], 0, "O");
        assert!(g.contains("bc=0010"));
        assert!(!g.contains("bc4=0010"));
        assert!(Clusters::read_tsv("x\t12\n".as_bytes()).is_err());
    }

    #[test]
    fn interning() {
        let mut idx = FeatureIndex::new();
        assert_eq!(idx.intern("a"), 0);
        assert_eq!(idx.intern("b"), 1);
        assert_eq!(idx.intern("a"), 0);
        assert_eq!(FeatureIndex::from_names(idx.names().to_vec()), idx);
    }
}
