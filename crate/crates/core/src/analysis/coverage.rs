//! Coverage of human-study codes by agent transcripts, and how it scales
//! with team size.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{AnalysisError, CodedTranscript};
use crate::rng::{derive_seed, SeededRng};

/// `|human ∩ agent| / |human|`.
pub fn coverage(human: &BTreeSet<String>, agent: &BTreeSet<String>) -> Result<f64, AnalysisError> {
    if human.is_empty() {
        return Err(AnalysisError::EmptyHumanSet);
    }
    Ok(human.intersection(agent).count() as f64 / human.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCurve {
    pub sizes: Vec<usize>,
    pub repeats: usize,
    pub seed: u64,
    pub means: Vec<f64>,
    /// Per size, the coverage of each repeat (one entry for the full team).
    pub samples: Vec<Vec<f64>>,
}

impl CoverageCurve {
    pub fn mean_at(&self, size: usize) -> Option<f64> {
        self.sizes.iter().position(|s| *s == size).map(|i| self.means[i])
    }

    /// `size,mean,samples` rows for plotting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("size,mean_coverage,repeats,samples\n");
        for ((s, m), xs) in self.sizes.iter().zip(&self.means).zip(&self.samples) {
            let joined: Vec<String> = xs.iter().map(|x| format!("{x:.6}")).collect();
            out.push_str(&format!("{s},{m:.6},{},{}\n", xs.len(), joined.join(";")));
        }
        out
    }
}

/// 1, 2, 4, … up to the largest power of two below `population`, then
/// `population` itself.
pub fn doubling_sizes(population: usize) -> Vec<usize> {
    let mut sizes = Vec::new();
    let mut s = 1;
    while s < population {
        sizes.push(s);
        s *= 2;
    }
    if population > 0 {
        sizes.push(population);
    }
    sizes
}

/// Per code of `human`, how many of `agents` mention it.
fn carrier_counts(agents: &[CodedTranscript], human: &BTreeSet<String>) -> Vec<usize> {
    let sets: Vec<BTreeSet<&str>> = agents
        .iter()
        .map(|a| a.codes.iter().map(String::as_str).collect())
        .collect();
    human
        .iter()
        .map(|c| sets.iter().filter(|s| s.contains(c.as_str())).count())
        .collect()
}

/// Mean coverage over `repeats` random teams per size, drawn without
/// replacement. Each (size, repeat) draws from its own derived seed; a
/// size equal to the population is evaluated once.
pub fn subsample_coverage(
    agents: &[CodedTranscript],
    human: &BTreeSet<String>,
    sizes: &[usize],
    repeats: usize,
    seed: u64,
) -> Result<CoverageCurve, AnalysisError> {
    if human.is_empty() {
        return Err(AnalysisError::EmptyHumanSet);
    }
    if repeats == 0 {
        return Err(AnalysisError::Input("repeats must be at least 1".into()));
    }
    if sizes.is_empty() || sizes.windows(2).any(|w| w[0] >= w[1]) || sizes[0] == 0 {
        return Err(AnalysisError::Input(
            "sizes must be positive and strictly increasing".into(),
        ));
    }
    let n = agents.len();
    if let Some(&s) = sizes.iter().find(|&&s| s > n) {
        return Err(AnalysisError::SizeExceedsPopulation { size: s, population: n });
    }
    // Index human codes once; each transcript becomes a bitmask-like list.
    let index: std::collections::BTreeMap<&str, usize> =
        human.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let hits: Vec<Vec<usize>> = agents
        .iter()
        .map(|a| a.codes.iter().filter_map(|c| index.get(c.as_str()).copied()).collect())
        .collect();
    let team_coverage = |members: &[usize]| -> f64 {
        let mut seen = vec![false; human.len()];
        for &m in members {
            for &h in &hits[m] {
                seen[h] = true;
            }
        }
        seen.iter().filter(|x| **x).count() as f64 / human.len() as f64
    };

    let mut means = Vec::with_capacity(sizes.len());
    let mut samples = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let xs: Vec<f64> = if size == n {
            vec![team_coverage(&(0..n).collect::<Vec<_>>())]
        } else {
            (0..repeats)
                .map(|r| {
                    let mut rng = SeededRng::new(derive_seed(seed, &format!("coverage/{size}/{r}")));
                    team_coverage(&rng.sample_indices(n, size))
                })
                .collect()
        };
        means.push(xs.iter().sum::<f64>() / xs.len() as f64);
        samples.push(xs);
    }
    Ok(CoverageCurve {
        sizes: sizes.to_vec(),
        repeats,
        seed,
        means,
        samples,
    })
}

/// Probability that a uniformly random `size`-subset of `n` items avoids
/// all `k` marked ones: C(n-k, size) / C(n, size).
fn miss_probability(n: usize, k: usize, size: usize) -> f64 {
    if k + size > n {
        return 0.0;
    }
    (0..size).map(|i| (n - k - i) as f64 / (n - i) as f64).product()
}

/// Exact expected coverage of a uniformly random team of `size`.
pub fn expected_coverage(
    agents: &[CodedTranscript],
    human: &BTreeSet<String>,
    size: usize,
) -> Result<f64, AnalysisError> {
    if human.is_empty() {
        return Err(AnalysisError::EmptyHumanSet);
    }
    let n = agents.len();
    if size > n {
        return Err(AnalysisError::SizeExceedsPopulation { size, population: n });
    }
    let counts = carrier_counts(agents, human);
    Ok(counts.iter().map(|&k| 1.0 - miss_probability(n, k, size)).sum::<f64>() / human.len() as f64)
}

/// Agents per human: the smallest sampled size whose mean coverage reaches
/// `threshold`, divided by the number of human participants.
pub fn equivalency_ratio(curve: &CoverageCurve, human_count: usize, threshold: f64) -> Result<f64, AnalysisError> {
    if human_count == 0 {
        return Err(AnalysisError::Input("human_count must be positive".into()));
    }
    let size = curve
        .sizes
        .iter()
        .zip(&curve.means)
        .find(|(_, m)| **m >= threshold)
        .map(|(s, _)| *s)
        .ok_or(AnalysisError::InsufficientCoverage {
            threshold,
            best: curve.means.iter().cloned().fold(0.0, f64::max),
        })?;
    Ok(size as f64 / human_count as f64)
}

#[cfg(test)]
mod tests {
    use super::super::Study;
    use super::*;
    use proptest::prelude::*;

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    fn agent(i: usize, codes: &[&str]) -> CodedTranscript {
        CodedTranscript {
            id: format!("a{i}"),
            study: Study::Agentic,
            codes: codes.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn formula_cases() {
        let h = set(&["a", "b", "c", "d"]);
        assert_eq!(coverage(&h, &set(&["a", "b", "c", "d", "e"])).unwrap(), 1.0);
        assert_eq!(coverage(&h, &set(&["a", "b"])).unwrap(), 0.5);
        assert_eq!(coverage(&set(&["a"]), &set(&[])).unwrap(), 0.0);
        assert_eq!(coverage(&set(&[]), &h), Err(AnalysisError::EmptyHumanSet));
    }

    fn four() -> Vec<CodedTranscript> {
        vec![
            agent(0, &["a"]),
            agent(1, &["a", "b"]),
            agent(2, &["c"]),
            agent(3, &["d"]),
        ]
    }

    #[test]
    fn full_team_is_exact_and_single() {
        let h = set(&["a", "b", "c", "d"]);
        let curve = subsample_coverage(&four(), &h, &[1, 2, 4], 10, 7).unwrap();
        assert_eq!(curve.mean_at(4), Some(1.0));
        assert_eq!(curve.samples[2].len(), 1);
        assert_eq!(curve.samples[0].len(), 10);
    }

    #[test]
    fn single_member_expectation() {
        let h = set(&["a", "b", "c", "d"]);
        // (0.25 + 0.5 + 0.25 + 0.25) / 4
        assert!((expected_coverage(&four(), &h, 1).unwrap() - 0.3125).abs() < 1e-15);
        assert_eq!(expected_coverage(&four(), &h, 4).unwrap(), 1.0);
    }

    #[test]
    fn size_above_population_errors() {
        let h = set(&["a"]);
        assert_eq!(
            subsample_coverage(&four(), &h, &[1, 5], 3, 0).unwrap_err(),
            AnalysisError::SizeExceedsPopulation { size: 5, population: 4 }
        );
        assert!(subsample_coverage(&four(), &h, &[2, 1], 3, 0).is_err());
    }

    #[test]
    fn same_seed_same_curve() {
        let h = set(&["a", "b", "c", "d"]);
        let a = subsample_coverage(&four(), &h, &[1, 2, 3], 10, 99).unwrap();
        let b = subsample_coverage(&four(), &h, &[1, 2, 3], 10, 99).unwrap();
        assert_eq!(a, b);
    }

    fn curve(sizes: Vec<usize>, means: Vec<f64>) -> CoverageCurve {
        CoverageCurve {
            samples: means.iter().map(|m| vec![*m]).collect(),
            sizes,
            repeats: 1,
            seed: 0,
            means,
        }
    }

    #[test]
    fn equivalency_convention() {
        let c = curve(vec![32, 64, 128, 240], vec![0.8, 0.89, 0.905, 0.91]);
        assert_eq!(equivalency_ratio(&c, 10, 0.9).unwrap(), 12.8);
        let c = curve(vec![32, 64, 128], vec![0.85, 0.9, 0.91]);
        assert_eq!(equivalency_ratio(&c, 20, 0.9).unwrap(), 3.2);
        let c = curve(vec![1, 2], vec![0.5, 0.8]);
        assert!(matches!(
            equivalency_ratio(&c, 10, 0.9),
            Err(AnalysisError::InsufficientCoverage { .. })
        ));
    }

    #[test]
    fn doubling_schedule() {
        assert_eq!(doubling_sizes(240), vec![1, 2, 4, 8, 16, 32, 64, 128, 240]);
        assert_eq!(doubling_sizes(128), vec![1, 2, 4, 8, 16, 32, 64, 128]);
        assert_eq!(doubling_sizes(1), vec![1]);
    }

    fn population() -> impl Strategy<Value = Vec<Vec<u8>>> {
        proptest::collection::vec(proptest::collection::vec(0u8..6, 0..4), 1..=8)
    }

    fn to_agents(pop: &[Vec<u8>]) -> Vec<CodedTranscript> {
        pop.iter()
            .enumerate()
            .map(|(i, cs)| CodedTranscript {
                id: format!("a{i}"),
                study: Study::Agentic,
                codes: cs.iter().map(|c| format!("c{c}")).collect(),
            })
            .collect()
    }

    proptest! {
        #[test]
        fn coverage_is_monotone_in_nested_teams(pop in population(), cut in 0usize..8) {
            let agents = to_agents(&pop);
            let human: BTreeSet<String> = (0..6).map(|c| format!("c{c}")).collect();
            let cut = cut.min(agents.len());
            let union = |xs: &[CodedTranscript]| xs.iter().flat_map(|a| a.codes.iter().cloned()).collect::<BTreeSet<_>>();
            let small = coverage(&human, &union(&agents[..cut])).unwrap();
            let big = coverage(&human, &union(&agents)).unwrap();
            prop_assert!(small <= big);
            prop_assert!((0.0..=1.0).contains(&big));
        }

        #[test]
        fn expectation_is_nondecreasing_in_size(pop in population()) {
            let agents = to_agents(&pop);
            let human: BTreeSet<String> = (0..6).map(|c| format!("c{c}")).collect();
            let mut prev = 0.0;
            for s in 1..=agents.len() {
                let e = expected_coverage(&agents, &human, s).unwrap();
                prop_assert!(e + 1e-12 >= prev);
                prev = e;
            }
        }
    }
}
