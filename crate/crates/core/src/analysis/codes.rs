//! Codebooks, coded transcripts, frequency tables and set overlap.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AnalysisError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    Agentic,
    Local,
    Crowdsourced,
    Generic,
}

impl Study {
    pub const ALL: [Study; 4] = [Self::Agentic, Self::Local, Self::Crowdsourced, Self::Generic];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Agentic => "agentic",
            Self::Local => "local",
            Self::Crowdsourced => "crowdsourced",
            Self::Generic => "generic",
        }
    }
}

impl std::fmt::Display for Study {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Study {
    type Err = AnalysisError;
    fn from_str(s: &str) -> Result<Self, AnalysisError> {
        Self::ALL
            .into_iter()
            .find(|x| x.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| AnalysisError::Input(format!("unknown study {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Code {
    pub code_id: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Codebook {
    codes: Vec<Code>,
    index: BTreeMap<String, usize>,
}

impl Codebook {
    pub fn new(codes: Vec<Code>) -> Result<Self, AnalysisError> {
        let mut index = BTreeMap::new();
        for (i, c) in codes.iter().enumerate() {
            if index.insert(c.code_id.clone(), i).is_some() {
                return Err(AnalysisError::Input(format!("duplicate code id {:?}", c.code_id)));
            }
        }
        Ok(Self { codes, index })
    }

    /// One JSON code per line.
    pub fn load(path: &Path) -> Result<Self, AnalysisError> {
        Self::new(read_jsonl(path)?)
    }

    pub fn get(&self, code_id: &str) -> Option<&Code> {
        self.index.get(code_id).map(|&i| &self.codes[i])
    }

    pub fn codes(&self) -> &[Code] {
        &self.codes
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// Every code used by `coded` must be in the book.
    pub fn check(&self, coded: &[CodedTranscript]) -> Result<(), AnalysisError> {
        for t in coded {
            if let Some(c) = t.codes.iter().find(|c| !self.index.contains_key(c.as_str())) {
                return Err(AnalysisError::UnknownCode {
                    transcript: t.id.clone(),
                    code: c.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Codes applied to one transcript. A code listed twice was applied to two
/// separate passages; set-based measures ignore the repetition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodedTranscript {
    pub id: String,
    pub study: Study,
    pub codes: Vec<String>,
}

impl CodedTranscript {
    pub fn code_set(&self) -> BTreeSet<String> {
        self.codes.iter().cloned().collect()
    }
}

pub(crate) fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, AnalysisError> {
    let text = fs::read_to_string(path).map_err(|e| AnalysisError::Io(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| AnalysisError::Input(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// One JSON coded transcript per line.
pub fn load_coded(path: &Path) -> Result<Vec<CodedTranscript>, AnalysisError> {
    let coded: Vec<CodedTranscript> = read_jsonl(path)?;
    let mut ids = BTreeSet::new();
    for t in &coded {
        if !ids.insert(t.id.as_str()) {
            return Err(AnalysisError::Input(format!("duplicate transcript id {:?}", t.id)));
        }
    }
    Ok(coded)
}

/// Union of codes over the transcripts of one study.
pub fn study_codes(coded: &[CodedTranscript], study: Study) -> BTreeSet<String> {
    coded
        .iter()
        .filter(|t| t.study == study)
        .flat_map(|t| t.codes.iter().cloned())
        .collect()
}

pub fn of_study(coded: &[CodedTranscript], study: Study) -> Vec<CodedTranscript> {
    coded.iter().filter(|t| t.study == study).cloned().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeCount {
    pub code_id: String,
    pub count: usize,
}

/// Occurrences per code, most frequent first, ties by code id.
pub fn code_frequency(coded: &[CodedTranscript]) -> Vec<CodeCount> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in coded {
        for c in &t.codes {
            *counts.entry(c.as_str()).or_default() += 1;
        }
    }
    let mut table: Vec<CodeCount> = counts
        .into_iter()
        .map(|(code_id, count)| CodeCount {
            code_id: code_id.to_string(),
            count,
        })
        .collect();
    table.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.code_id.cmp(&b.code_id)));
    table
}

/// Region sizes of a three-set Venn diagram of local (L), crowdsourced (C)
/// and agent (A) codes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VennRegions {
    pub local_only: usize,
    pub crowd_only: usize,
    pub agent_only: usize,
    pub local_crowd: usize,
    pub local_agent: usize,
    pub crowd_agent: usize,
    pub all_three: usize,
}

impl VennRegions {
    pub fn total(&self) -> usize {
        self.local_only
            + self.crowd_only
            + self.agent_only
            + self.local_crowd
            + self.local_agent
            + self.crowd_agent
            + self.all_three
    }

    pub fn to_csv(&self) -> String {
        format!(
            "region,count\nlocal_only,{}\ncrowd_only,{}\nagent_only,{}\nlocal_crowd,{}\nlocal_agent,{}\ncrowd_agent,{}\nall_three,{}\n",
            self.local_only, self.crowd_only, self.agent_only, self.local_crowd, self.local_agent, self.crowd_agent, self.all_three
        )
    }
}

pub fn venn_overlap(local: &BTreeSet<String>, crowd: &BTreeSet<String>, agent: &BTreeSet<String>) -> VennRegions {
    let mut r = VennRegions::default();
    for code in local.iter().chain(crowd).chain(agent).collect::<BTreeSet<_>>() {
        let slot = match (local.contains(code), crowd.contains(code), agent.contains(code)) {
            (true, false, false) => &mut r.local_only,
            (false, true, false) => &mut r.crowd_only,
            (false, false, true) => &mut r.agent_only,
            (true, true, false) => &mut r.local_crowd,
            (true, false, true) => &mut r.local_agent,
            (false, true, true) => &mut r.crowd_agent,
            (true, true, true) => &mut r.all_three,
            (false, false, false) => unreachable!("code comes from one of the sets"),
        };
        *slot += 1;
    }
    r
}

/// Synonym table: each key is replaced by its canonical code. Canonical
/// codes may not themselves be mapped.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Synonyms {
    pub synonyms: BTreeMap<String, String>,
}

impl Synonyms {
    pub fn from_toml(text: &str) -> Result<Self, AnalysisError> {
        let s: Self = toml::from_str(text).map_err(|e| AnalysisError::Input(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, AnalysisError> {
        let text = fs::read_to_string(path).map_err(|e| AnalysisError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        for (from, to) in &self.synonyms {
            if self.synonyms.contains_key(to) {
                return Err(AnalysisError::Input(format!("synonym chain {from:?} -> {to:?} -> ..")));
            }
        }
        Ok(())
    }
}

/// Rename codes per the synonym table. Duplicates created by merging are
/// kept, since they still count as separate applications.
pub fn apply_synonyms(coded: &[CodedTranscript], synonyms: &Synonyms) -> Vec<CodedTranscript> {
    coded
        .iter()
        .map(|t| CodedTranscript {
            id: t.id.clone(),
            study: t.study,
            codes: t
                .codes
                .iter()
                .map(|c| synonyms.synonyms.get(c).unwrap_or(c).clone())
                .collect(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    fn t(id: &str, codes: &[&str]) -> CodedTranscript {
        CodedTranscript {
            id: id.into(),
            study: Study::Agentic,
            codes: codes.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn frequency_order_and_ties() {
        assert!(code_frequency(&[]).is_empty());
        let table = code_frequency(&[t("1", &["b"]), t("2", &["a"])]);
        assert_eq!(
            table.iter().map(|c| (c.code_id.as_str(), c.count)).collect::<Vec<_>>(),
            vec![("a", 1), ("b", 1)]
        );
        let table = code_frequency(&[t("1", &["z", "z", "a"]), t("2", &["z"])]);
        assert_eq!(
            table[0],
            CodeCount {
                code_id: "z".into(),
                count: 3
            }
        );
    }

    #[test]
    fn venn_cases() {
        let s = set(&["a", "b", "c", "d", "e"]);
        assert_eq!(
            venn_overlap(&s, &s, &s),
            VennRegions {
                all_three: 5,
                ..Default::default()
            }
        );
        let r = venn_overlap(&set(&["a"]), &set(&["b", "c"]), &set(&["d", "e", "f"]));
        assert_eq!((r.local_only, r.crowd_only, r.agent_only, r.total()), (1, 2, 3, 6));
        let r = venn_overlap(&set(&["a", "b"]), &set(&["b", "c"]), &set(&["b", "d"]));
        assert_eq!(
            r,
            VennRegions {
                local_only: 1,
                crowd_only: 1,
                agent_only: 1,
                all_three: 1,
                ..Default::default()
            }
        );
    }

    #[test]
    fn codebook_rejects_duplicates_and_unknown_codes() {
        let code = |id: &str| Code {
            code_id: id.into(),
            label: id.into(),
            description: None,
        };
        assert!(Codebook::new(vec![code("a"), code("a")]).is_err());
        let book = Codebook::new(vec![code("a"), code("b")]).unwrap();
        assert!(book.check(&[t("1", &["a", "b"])]).is_ok());
        assert!(matches!(
            book.check(&[t("1", &["c"])]),
            Err(AnalysisError::UnknownCode { .. })
        ));
    }

    #[test]
    fn synonyms_merge_codes() {
        let syn = Synonyms::from_toml("[synonyms]\n\"too wordy\" = \"lengthy\"\n").unwrap();
        let out = apply_synonyms(&[t("1", &["too wordy", "lengthy", "other"])], &syn);
        assert_eq!(out[0].codes, vec!["lengthy", "lengthy", "other"]);
        assert_eq!(out[0].code_set().len(), 2);
        assert!(Synonyms::from_toml("[synonyms]\na = \"b\"\nb = \"c\"\n").is_err());
    }

    #[test]
    fn study_names() {
        assert_eq!("Crowdsourced".parse::<Study>().unwrap(), Study::Crowdsourced);
        assert_eq!(serde_json::to_string(&Study::Generic).unwrap(), "\"generic\"");
    }

    proptest! {
        #[test]
        fn venn_regions_partition_the_union(
            a in proptest::collection::btree_set(0u8..12, 0..8),
            b in proptest::collection::btree_set(0u8..12, 0..8),
            c in proptest::collection::btree_set(0u8..12, 0..8),
        ) {
            let s = |x: &BTreeSet<u8>| x.iter().map(|v| v.to_string()).collect::<BTreeSet<String>>();
            let (a, b, c) = (s(&a), s(&b), s(&c));
            let union: BTreeSet<_> = a.iter().chain(&b).chain(&c).collect();
            prop_assert_eq!(venn_overlap(&a, &b, &c).total(), union.len());
        }
    }
}
