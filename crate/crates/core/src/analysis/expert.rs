//! Expert-evaluation metrics: fidelity, ranked helpfulness and inter-rater
//! agreement.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AnalysisError, Study};

/// Mean over groups of `matched / per_group_max`.
pub fn behavior_fidelity(matched: &[u32], per_group_max: u32) -> Result<f64, AnalysisError> {
    if matched.is_empty() || per_group_max == 0 {
        return Err(AnalysisError::Input(
            "behavior groups and their maximum must be non-empty".into(),
        ));
    }
    if let Some(b) = matched.iter().find(|b| **b > per_group_max) {
        return Err(AnalysisError::OutOfRange(format!(
            "matched count {b} exceeds {per_group_max}"
        )));
    }
    Ok(matched.iter().map(|b| *b as f64 / per_group_max as f64).sum::<f64>() / matched.len() as f64)
}

/// `|a ∩ b| / |a ∪ b|`; `None` when both are empty.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> Option<f64> {
    let union = a.union(b).count();
    (union > 0).then(|| a.intersection(b).count() as f64 / union as f64)
}

/// Average Jaccard similarity of a study's insights to the two human
/// reference sets.
pub fn insight_fidelity(
    study: &BTreeSet<String>,
    local: &BTreeSet<String>,
    crowd: &BTreeSet<String>,
) -> Result<f64, AnalysisError> {
    match (jaccard(study, local), jaccard(study, crowd)) {
        (Some(l), Some(c)) => Ok((l + c) / 2.0),
        _ => Err(AnalysisError::Input("insight sets are empty".into())),
    }
}

/// Behavior and insight fidelity averaged and scaled to 0..=5.
pub fn combined_fidelity(behavior: f64, insight: f64) -> Result<f64, AnalysisError> {
    for (name, v) in [("behavior", behavior), ("insight", insight)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(AnalysisError::OutOfRange(format!("{name} fidelity {v} outside [0, 1]")));
        }
    }
    Ok((behavior + insight) / 2.0 * 5.0)
}

pub const TOP_K: usize = 10;

/// DCG of the presence vector over the ideal DCG, scaled to 0..=5.
pub fn insight_helpfulness(presence: &[bool]) -> Result<f64, AnalysisError> {
    if presence.len() != TOP_K {
        return Err(AnalysisError::Input(format!(
            "ranked list has {} entries, expected {TOP_K}",
            presence.len()
        )));
    }
    let gain = |k: usize| 1.0 / ((k + 2) as f64).log2();
    let dcg: f64 = presence
        .iter()
        .enumerate()
        .filter(|(_, p)| **p)
        .map(|(k, _)| gain(k))
        .sum();
    let ideal: f64 = (0..TOP_K).map(gain).sum();
    Ok(dcg / ideal * 5.0)
}

/// ICC(2,1): two-way random effects, absolute agreement, single rater.
/// `ratings[r][i]` is rater `r`'s score for item `i`.
pub fn icc_2_1(ratings: &[Vec<f64>]) -> Result<f64, AnalysisError> {
    let k = ratings.len();
    if k < 2 {
        return Err(AnalysisError::Input("ICC needs at least two raters".into()));
    }
    let n = ratings[0].len();
    if n < 2 {
        return Err(AnalysisError::Input("ICC needs at least two items".into()));
    }
    if ratings.iter().any(|r| r.len() != n) {
        return Err(AnalysisError::Input("ragged rating matrix".into()));
    }
    if ratings.iter().flatten().any(|x| !x.is_finite()) {
        return Err(AnalysisError::Input("missing or non-finite rating".into()));
    }
    let (kf, nf) = (k as f64, n as f64);
    let grand = ratings.iter().flatten().sum::<f64>() / (kf * nf);
    let item_means: Vec<f64> = (0..n).map(|i| ratings.iter().map(|r| r[i]).sum::<f64>() / kf).collect();
    let rater_means: Vec<f64> = ratings.iter().map(|r| r.iter().sum::<f64>() / nf).collect();

    let ss_total: f64 = ratings.iter().flatten().map(|x| (x - grand).powi(2)).sum();
    if ss_total == 0.0 {
        return Err(AnalysisError::DegenerateRatings);
    }
    let ss_items = kf * item_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_raters = nf * rater_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_error = ss_total - ss_items - ss_raters;

    let ms_items = ss_items / (nf - 1.0);
    let ms_raters = ss_raters / (kf - 1.0);
    let ms_error = ss_error / ((nf - 1.0) * (kf - 1.0));
    let denom = ms_items + (kf - 1.0) * ms_error + kf * (ms_raters - ms_error) / nf;
    if denom == 0.0 {
        return Err(AnalysisError::DegenerateRatings);
    }
    Ok((ms_items - ms_error) / denom)
}

/// One row of an expert rating table: a dimension, an expert, and a score
/// per study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRow {
    pub dimension: String,
    pub expert: String,
    pub scores: BTreeMap<Study, f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RatingTable {
    pub rows: Vec<RatingRow>,
}

impl RatingTable {
    /// CSV with header `dimension,expert,<study>,...`; `#` lines are comments.
    pub fn from_csv(text: &str) -> Result<Self, AnalysisError> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let bad = |e: csv::Error| AnalysisError::Input(format!("rating table: {e}"));
        let header = reader.headers().map_err(bad)?.clone();
        if header.len() < 3 || &header[0] != "dimension" || &header[1] != "expert" {
            return Err(AnalysisError::Input("header must start with dimension,expert".into()));
        }
        let studies = header
            .iter()
            .skip(2)
            .map(str::parse::<Study>)
            .collect::<Result<Vec<_>, _>>()?;
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(bad)?;
            let scores = studies
                .iter()
                .zip(record.iter().skip(2))
                .map(|(s, c)| {
                    c.parse::<f64>()
                        .map(|v| (*s, v))
                        .map_err(|_| AnalysisError::Input(format!("row {}: bad score {c:?}", i + 1)))
                })
                .collect::<Result<_, _>>()?;
            rows.push(RatingRow {
                dimension: record[0].to_string(),
                expert: record[1].to_string(),
                scores,
            });
        }
        Ok(Self { rows })
    }

    pub fn load(path: &Path) -> Result<Self, AnalysisError> {
        let text = fs::read_to_string(path).map_err(|e| AnalysisError::Io(format!("{}: {e}", path.display())))?;
        Self::from_csv(&text)
    }

    /// Raters × items, items ordered by dimension (first appearance) then
    /// study; raters in first-appearance order.
    pub fn rater_matrix(&self) -> Result<Vec<Vec<f64>>, AnalysisError> {
        let mut experts: Vec<&str> = Vec::new();
        let mut dims: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !experts.contains(&r.expert.as_str()) {
                experts.push(&r.expert);
            }
            if !dims.contains(&r.dimension.as_str()) {
                dims.push(&r.dimension);
            }
        }
        experts
            .iter()
            .map(|e| {
                let mut row = Vec::new();
                for d in &dims {
                    let r = self
                        .rows
                        .iter()
                        .find(|r| r.expert == *e && r.dimension == *d)
                        .ok_or_else(|| AnalysisError::Input(format!("no {d} row for {e}")))?;
                    row.extend(r.scores.values().copied());
                }
                Ok(row)
            })
            .collect()
    }
}

/// One expert's review of the study packets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertPacket {
    pub expert: String,
    /// 1..=5 per study.
    pub time_rating: BTreeMap<Study, u8>,
    pub cost_rating: BTreeMap<Study, u8>,
    /// Matched behaviors per study in each of the experts' groups.
    pub behavior_matches: BTreeMap<Study, Vec<u32>>,
    #[serde(default = "default_group_max")]
    pub behaviors_per_group: u32,
    /// Insight ids each study produced.
    pub insights: BTreeMap<Study, BTreeSet<String>>,
    /// The expert's ten most useful insights, best first, with the studies
    /// each one came from.
    pub top_insights: Vec<BTreeSet<Study>>,
}

fn default_group_max() -> u32 {
    10
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyScores {
    pub time_efficiency: f64,
    pub cost_efficiency: f64,
    pub behavior_fidelity: f64,
    pub insight_fidelity: f64,
    pub fidelity: f64,
    pub insight_helpfulness: f64,
}

impl ExpertPacket {
    pub fn from_toml(text: &str) -> Result<Self, AnalysisError> {
        let p: Self = toml::from_str(text).map_err(|e| AnalysisError::Input(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self, AnalysisError> {
        let text = fs::read_to_string(path).map_err(|e| AnalysisError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| AnalysisError::Input(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        if self.top_insights.len() != TOP_K {
            return Err(AnalysisError::Input(format!(
                "{}: top insights must list {TOP_K}",
                self.expert
            )));
        }
        for (s, r) in self.time_rating.iter().chain(&self.cost_rating) {
            if !(1..=5).contains(r) {
                return Err(AnalysisError::OutOfRange(format!(
                    "{}: rating {r} for {s}",
                    self.expert
                )));
            }
        }
        for (s, b) in &self.behavior_matches {
            if b.iter().any(|x| *x > self.behaviors_per_group) {
                return Err(AnalysisError::OutOfRange(format!(
                    "{}: behavior count for {s}",
                    self.expert
                )));
            }
        }
        Ok(())
    }

    /// All four dimensions for every study the packet rates.
    pub fn score(&self) -> Result<BTreeMap<Study, StudyScores>, AnalysisError> {
        let empty = BTreeSet::new();
        let local = self.insights.get(&Study::Local).unwrap_or(&empty);
        let crowd = self.insights.get(&Study::Crowdsourced).unwrap_or(&empty);
        let mut out = BTreeMap::new();
        for (study, time) in &self.time_rating {
            let missing = |what: &str| AnalysisError::Input(format!("{}: no {what} for {study}", self.expert));
            let cost = *self.cost_rating.get(study).ok_or_else(|| missing("cost rating"))?;
            let b = behavior_fidelity(
                self.behavior_matches
                    .get(study)
                    .ok_or_else(|| missing("behavior matches"))?,
                self.behaviors_per_group,
            )?;
            let i = insight_fidelity(self.insights.get(study).unwrap_or(&empty), local, crowd)?;
            let presence: Vec<bool> = self.top_insights.iter().map(|srcs| srcs.contains(study)).collect();
            out.insert(
                *study,
                StudyScores {
                    time_efficiency: *time as f64,
                    cost_efficiency: cost as f64,
                    behavior_fidelity: b,
                    insight_fidelity: i,
                    fidelity: combined_fidelity(b, i)?,
                    insight_helpfulness: insight_helpfulness(&presence)?,
                },
            );
        }
        Ok(out)
    }
}

type Dimension = (&'static str, fn(&StudyScores) -> f64);

/// Rating table with one row per (dimension, expert), built from packets.
pub fn packets_to_table(packets: &[ExpertPacket]) -> Result<RatingTable, AnalysisError> {
    let scored: Vec<_> = packets
        .iter()
        .map(|p| Ok((p, p.score()?)))
        .collect::<Result<_, AnalysisError>>()?;
    let mut rows = Vec::new();
    let dims: [Dimension; 4] = [
        ("time_efficiency", |s| s.time_efficiency),
        ("cost_efficiency", |s| s.cost_efficiency),
        ("fidelity", |s| s.fidelity),
        ("insight_helpfulness", |s| s.insight_helpfulness),
    ];
    for (name, get) in dims {
        for (p, scores) in &scored {
            rows.push(RatingRow {
                dimension: name.to_string(),
                expert: p.expert.clone(),
                scores: scores.iter().map(|(s, v)| (*s, get(v))).collect(),
            });
        }
    }
    Ok(RatingTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn behavior_cases() {
        assert_eq!(behavior_fidelity(&[10, 10, 10], 10).unwrap(), 1.0);
        assert_eq!(behavior_fidelity(&[0, 0, 0], 10).unwrap(), 0.0);
        assert!((behavior_fidelity(&[7, 8, 9], 10).unwrap() - 0.8).abs() < 1e-15);
        assert!(matches!(
            behavior_fidelity(&[11, 0, 0], 10),
            Err(AnalysisError::OutOfRange(_))
        ));
    }

    #[test]
    fn insight_cases() {
        let s = set(&["x", "y"]);
        assert_eq!(insight_fidelity(&s, &s, &s).unwrap(), 1.0);
        assert_eq!(insight_fidelity(&s, &set(&["p"]), &set(&["q"])).unwrap(), 0.0);
        let v = insight_fidelity(&s, &set(&["x"]), &set(&["y", "z"])).unwrap();
        assert!((v - (0.5 + 1.0 / 3.0) / 2.0).abs() < 1e-15);
        assert!(insight_fidelity(&set(&[]), &set(&[]), &set(&[])).is_err());
    }

    #[test]
    fn combined_cases() {
        assert_eq!(combined_fidelity(1.0, 1.0).unwrap(), 5.0);
        assert_eq!(combined_fidelity(0.0, 0.0).unwrap(), 0.0);
        assert!((combined_fidelity(0.6, 0.768).unwrap() - 3.42).abs() < 1e-12);
        assert!(combined_fidelity(1.2, 0.0).is_err());
    }

    #[test]
    fn helpfulness_cases() {
        assert_eq!(insight_helpfulness(&[true; 10]).unwrap(), 5.0);
        assert_eq!(insight_helpfulness(&[false; 10]).unwrap(), 0.0);
        let mut first = [false; 10];
        first[0] = true;
        assert!((insight_helpfulness(&first).unwrap() - 1.100_458_831_490_400_7).abs() < 1e-12);
        assert!(insight_helpfulness(&[true; 9]).is_err());
    }

    #[test]
    fn icc_cases() {
        let same = vec![vec![1.0, 3.0, 5.0, 2.0]; 3];
        assert!((icc_2_1(&same).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(icc_2_1(&vec![vec![3.0; 4]; 3]), Err(AnalysisError::DegenerateRatings));
        assert!(icc_2_1(&[vec![1.0, 2.0]]).is_err());
        assert!(icc_2_1(&[vec![1.0, 2.0], vec![1.0]]).is_err());
    }

    #[test]
    fn rating_table_matrix_layout() {
        let t = RatingTable::from_csv(
            "# comment\ndimension,expert,agentic,local\ntime,e1,5,1\ntime,e2,4,2\ncost,e1,3,3\ncost,e2,2,1\n",
        )
        .unwrap();
        assert_eq!(
            t.rater_matrix().unwrap(),
            vec![vec![5.0, 1.0, 3.0, 3.0], vec![4.0, 2.0, 2.0, 1.0]]
        );
        assert!(RatingTable::from_csv("dimension,expert,agentic\nx,e1,abc\n").is_err());
    }

    #[test]
    fn packet_scoring() {
        let toml = r#"
expert = "e1"
top_insights = [["agentic"], ["local"], [], [], [], [], [], [], [], []]
[time_rating]
agentic = 5
local = 1
[cost_rating]
agentic = 4
local = 2
[behavior_matches]
agentic = [7, 8, 9]
local = [10, 10, 10]
[insights]
agentic = ["a", "b"]
local = ["a"]
crowdsourced = ["b", "c"]
"#;
        let p = ExpertPacket::from_toml(toml).unwrap();
        let s = p.score().unwrap();
        let a = s[&Study::Agentic];
        assert!((a.behavior_fidelity - 0.8).abs() < 1e-15);
        assert!((a.insight_fidelity - (0.5 + 1.0 / 3.0) / 2.0).abs() < 1e-15);
        assert!((a.insight_helpfulness - 1.100_458_831_490_400_7).abs() < 1e-12);
        assert_eq!(s[&Study::Local].time_efficiency, 1.0);
        let table = packets_to_table(&[p]).unwrap();
        assert_eq!(table.rows.len(), 4);
        let bad = toml.replace("agentic = 5", "agentic = 6");
        assert!(ExpertPacket::from_toml(&bad).is_err());
    }

    proptest! {
        #[test]
        fn moving_a_hit_up_increases_helpfulness(from in 1usize..10, to in 0usize..10, others in proptest::collection::vec(any::<bool>(), 10)) {
            prop_assume!(to < from);
            let mut base = others.clone();
            base[from] = true;
            base[to] = false;
            let mut moved = base.clone();
            moved[from] = false;
            moved[to] = true;
            prop_assert!(insight_helpfulness(&moved).unwrap() > insight_helpfulness(&base).unwrap());
        }

        #[test]
        fn scores_stay_in_range(b in proptest::collection::vec(0u32..=10, 3), p in proptest::collection::vec(any::<bool>(), 10)) {
            let bf = behavior_fidelity(&b, 10).unwrap();
            prop_assert!((0.0..=1.0).contains(&bf));
            let c = combined_fidelity(bf, bf / 2.0).unwrap();
            prop_assert!((0.0..=5.0).contains(&c));
            let h = insight_helpfulness(&p).unwrap();
            prop_assert!((0.0..=5.0 + 1e-12).contains(&h));
        }
    }
}
