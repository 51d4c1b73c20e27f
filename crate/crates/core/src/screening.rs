//! Screening: mean-split curving of Big Five scores and quota-driven
//! selection over the enriched-profile stream, with early stop.
//!
//! Bins are defined against a group mean: strictly above the mean is
//! `high`, anything else (including a score equal to the mean) is `low`.
//!
//! [`Screener`] consumes profiles one at a time. Means are recomputed only
//! at checkpoints (every `checkpoint_every` arrivals, and once more at
//! stream end), so before the first checkpoint only cells that leave every
//! dimension as a wildcard can accept anyone. At each checkpoint:
//!
//! 1. group means are recomputed over the reference group;
//! 2. every accepted profile is re-binned, and one whose bins no longer fit
//!    its cell is released (it rejoins candidacy at the next checkpoint);
//! 3. waiting candidates are offered again, in arrival order.
//!
//! When every tally reaches its target the screener stops and fires its
//! [`CancelToken`], which onboarding uses to stop surveying.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::onboarding::{BartleType, EnrichedProfile, Trait};
use crate::workers::CancelToken;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScreeningError {
    #[error("empty profile set")]
    EmptySet,
    #[error("quota: {0}")]
    Quota(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bin {
    High,
    Low,
}

impl fmt::Display for Bin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Bin::High => "high",
            Bin::Low => "low",
        })
    }
}

pub type Bins = BTreeMap<Trait, Bin>;

pub fn bin_for(score: f64, mean: f64) -> Bin {
    if score > mean {
        Bin::High
    } else {
        Bin::Low
    }
}

/// Which profiles the curving means are computed over.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceGroup {
    /// Every profile seen so far.
    #[default]
    Surveyed,
    /// The currently accepted team (all seen profiles while it is empty).
    Accepted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvingRule {
    pub dimensions: Vec<Trait>,
    #[serde(default)]
    pub reference: ReferenceGroup,
}

impl CurvingRule {
    pub fn all_traits() -> Self {
        Self {
            dimensions: Trait::ALL.to_vec(),
            reference: ReferenceGroup::Surveyed,
        }
    }
}

/// Per-dimension arithmetic mean over `profiles`.
pub fn group_means<'a, I>(profiles: I, dims: &[Trait]) -> Option<BTreeMap<Trait, f64>>
where
    I: IntoIterator<Item = &'a EnrichedProfile>,
{
    let mut sums: BTreeMap<Trait, f64> = dims.iter().map(|d| (*d, 0.0)).collect();
    let mut n = 0usize;
    for p in profiles {
        n += 1;
        for (d, s) in sums.iter_mut() {
            *s += p.big_five.get(*d);
        }
    }
    (n > 0).then(|| sums.into_iter().map(|(d, s)| (d, s / n as f64)).collect())
}

fn bins_against(profile: &EnrichedProfile, means: &BTreeMap<Trait, f64>) -> Bins {
    means
        .iter()
        .map(|(d, m)| (*d, bin_for(profile.big_five.get(*d), *m)))
        .collect()
}

/// Label every profile high/low per dimension against the set's own means.
pub fn curve_scores(profiles: &[EnrichedProfile], rule: &CurvingRule) -> Result<Vec<Bins>, ScreeningError> {
    let means = group_means(profiles, &rule.dimensions).ok_or(ScreeningError::EmptySet)?;
    Ok(profiles.iter().map(|p| bins_against(p, &means)).collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuotaMode {
    #[default]
    BalanceFirst,
    PriorityFirst,
}

/// Attribute bundle a cell accepts. Absent entries are wildcards.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellPattern {
    pub bartle: Option<BartleType>,
    pub bins: BTreeMap<Trait, Bin>,
}

impl CellPattern {
    /// `bins` is `None` when no means exist yet.
    fn matches(&self, profile: &EnrichedProfile, bins: Option<&Bins>) -> bool {
        if self.bartle.is_some_and(|b| b != profile.bartle_type) {
            return false;
        }
        if self.bins.is_empty() {
            return true;
        }
        let Some(bins) = bins else { return false };
        self.bins.iter().all(|(d, want)| bins.get(d) == Some(want))
    }
}

impl fmt::Display for CellPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = vec![self.bartle.map(|b| b.to_string()).unwrap_or_else(|| "*".into())];
        parts.extend(self.bins.iter().map(|(d, b)| format!("{d}={b}")));
        f.write_str(&parts.join("|"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QuotaCell {
    pub name: String,
    pub pattern: CellPattern,
    pub target: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QuotaSpec {
    pub mode: QuotaMode,
    pub cells: Vec<QuotaCell>,
    /// Cell names in fill order (priority_first). Defaults to declaration order.
    pub priority: Vec<String>,
}

#[derive(Deserialize)]
struct QuotaFile {
    #[serde(default)]
    mode: QuotaMode,
    #[serde(default)]
    priority: Vec<String>,
    #[serde(rename = "cell", default)]
    cells: Vec<CellFile>,
}

#[derive(Deserialize)]
struct CellFile {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    bartle: Option<String>,
    target: u32,
    #[serde(flatten)]
    dims: BTreeMap<String, String>,
}

impl QuotaSpec {
    pub fn new(mode: QuotaMode, cells: Vec<QuotaCell>) -> Result<Self, ScreeningError> {
        let priority = cells.iter().map(|c| c.name.clone()).collect();
        let spec = Self { mode, cells, priority };
        spec.validate()?;
        Ok(spec)
    }

    /// Parse the TOML quota format: `mode`, optional `priority`, and
    /// `[[cell]]` tables with `bartle`, per-dimension `high`/`low`/`*`, and
    /// `target`.
    pub fn from_toml(text: &str) -> Result<Self, ScreeningError> {
        let file: QuotaFile = toml::from_str(text).map_err(|e| ScreeningError::Quota(e.to_string()))?;
        let mut cells = Vec::new();
        for c in file.cells {
            let bartle = match c.bartle.as_deref() {
                None | Some("*") => None,
                Some(b) => Some(b.parse::<BartleType>().map_err(ScreeningError::Quota)?),
            };
            let mut bins = BTreeMap::new();
            for (k, v) in c.dims {
                let t: Trait = k.parse().map_err(ScreeningError::Quota)?;
                match v.as_str() {
                    "*" => {}
                    "high" => {
                        bins.insert(t, Bin::High);
                    }
                    "low" => {
                        bins.insert(t, Bin::Low);
                    }
                    other => {
                        return Err(ScreeningError::Quota(format!(
                            "bin must be high, low or *, got {other:?}"
                        )))
                    }
                }
            }
            let pattern = CellPattern { bartle, bins };
            cells.push(QuotaCell {
                name: c.name.unwrap_or_else(|| pattern.to_string()),
                pattern,
                target: c.target,
            });
        }
        let priority = if file.priority.is_empty() {
            cells.iter().map(|c| c.name.clone()).collect()
        } else {
            file.priority
        };
        let spec = Self {
            mode: file.mode,
            cells,
            priority,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, ScreeningError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ScreeningError::Quota(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ScreeningError> {
        let names: BTreeSet<&str> = self.cells.iter().map(|c| c.name.as_str()).collect();
        if names.len() != self.cells.len() {
            return Err(ScreeningError::Quota("cell names must be unique".into()));
        }
        if self.mode == QuotaMode::PriorityFirst {
            let order: BTreeSet<&str> = self.priority.iter().map(String::as_str).collect();
            if order != names || self.priority.len() != self.cells.len() {
                return Err(ScreeningError::Quota(
                    "priority order must list every cell exactly once".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn total_target(&self) -> u32 {
        self.cells.iter().map(|c| c.target).sum()
    }

    /// Dimensions any cell constrains.
    pub fn constrained_dimensions(&self) -> BTreeSet<Trait> {
        self.cells.iter().flat_map(|c| c.pattern.bins.keys().copied()).collect()
    }

    /// Bartle × high/low cells over `dims`, each with the same target.
    pub fn balanced(dims: &[Trait], per_cell: u32) -> Self {
        let mut cells = Vec::new();
        for b in BartleType::ALL {
            for mask in 0..(1u32 << dims.len()) {
                let bins = dims
                    .iter()
                    .enumerate()
                    .map(|(i, d)| (*d, if mask & (1 << i) == 0 { Bin::High } else { Bin::Low }))
                    .collect();
                let pattern = CellPattern { bartle: Some(b), bins };
                cells.push(QuotaCell {
                    name: pattern.to_string(),
                    pattern,
                    target: per_cell,
                });
            }
        }
        Self::new(QuotaMode::BalanceFirst, cells).expect("generated names are unique")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptedProfile {
    pub profile: EnrichedProfile,
    pub cell: String,
    pub bins: Bins,
}

/// On-disk accepted-team record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptedRecord {
    pub profile_id: String,
    pub pool: String,
    pub bartle_type: BartleType,
    pub big_five: crate::onboarding::BigFive,
    pub cell: String,
    pub bins: Bins,
}

impl AcceptedProfile {
    pub fn to_record(&self) -> AcceptedRecord {
        AcceptedRecord {
            profile_id: self.profile.basic.profile_id.clone(),
            pool: self.profile.basic.pool.clone(),
            bartle_type: self.profile.bartle_type,
            big_five: self.profile.big_five,
            cell: self.cell.clone(),
            bins: self.bins.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PoolStatistics {
    pub means: BTreeMap<Trait, f64>,
    /// Profiles the means were computed over.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningState {
    pub accepted: Vec<AcceptedProfile>,
    pub tallies: BTreeMap<String, u32>,
    pub pool_statistics: PoolStatistics,
    pub stopped: bool,
    /// Profiles offered before the stop (or stream end).
    pub seen: usize,
    pub checkpoints: usize,
    pub released: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Offer {
    Accepted,
    Candidate,
    /// Arrived after the stop.
    Ignored,
}

#[derive(Debug, Clone)]
struct Slot {
    seen_idx: usize,
    cell: usize,
    bins: Bins,
}

pub struct Screener {
    quota: QuotaSpec,
    rule: CurvingRule,
    checkpoint_every: usize,
    cancel: CancelToken,
    /// Cell indices in priority order.
    order: Vec<usize>,
    seen: Vec<EnrichedProfile>,
    means: Option<BTreeMap<Trait, f64>>,
    means_count: usize,
    accepted: Vec<Slot>,
    tallies: Vec<u32>,
    candidates: BTreeSet<usize>,
    released: Vec<usize>,
    released_total: usize,
    since_checkpoint: usize,
    checkpoints: usize,
    stopped: bool,
}

impl Screener {
    /// A screener whose stop signal is `cancel`. `checkpoint_every = 0`
    /// means a single checkpoint at stream end.
    pub fn new(
        quota: QuotaSpec,
        rule: CurvingRule,
        checkpoint_every: usize,
        cancel: CancelToken,
    ) -> Result<Self, ScreeningError> {
        quota.validate()?;
        for d in quota.constrained_dimensions() {
            if !rule.dimensions.contains(&d) {
                return Err(ScreeningError::Quota(format!(
                    "cell constrains {d} but curving does not bin it"
                )));
            }
        }
        let order = quota
            .priority
            .iter()
            .filter_map(|n| quota.cells.iter().position(|c| &c.name == n))
            .collect();
        let tallies = vec![0; quota.cells.len()];
        let mut s = Self {
            quota,
            rule,
            checkpoint_every,
            cancel,
            order,
            seen: Vec::new(),
            means: None,
            means_count: 0,
            accepted: Vec::new(),
            tallies,
            candidates: BTreeSet::new(),
            released: Vec::new(),
            released_total: 0,
            since_checkpoint: 0,
            checkpoints: 0,
            stopped: false,
        };
        s.check_stop();
        Ok(s)
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped
    }

    pub fn tallies(&self) -> impl Iterator<Item = (&str, u32, u32)> {
        self.quota
            .cells
            .iter()
            .zip(&self.tallies)
            .map(|(c, t)| (c.name.as_str(), *t, c.target))
    }

    pub fn accepted_count(&self) -> usize {
        self.accepted.len()
    }

    fn check_stop(&mut self) {
        if !self.stopped && self.quota.cells.iter().zip(&self.tallies).all(|(c, t)| *t == c.target) {
            self.stopped = true;
            self.cancel.cancel();
        }
    }

    fn bins_of(&self, idx: usize) -> Option<Bins> {
        self.means.as_ref().map(|m| bins_against(&self.seen[idx], m))
    }

    fn choose_cell(&self, idx: usize, bins: Option<&Bins>) -> Option<usize> {
        let profile = &self.seen[idx];
        let mut open = self.order.iter().copied().filter(|&c| {
            self.tallies[c] < self.quota.cells[c].target && self.quota.cells[c].pattern.matches(profile, bins)
        });
        match self.quota.mode {
            QuotaMode::PriorityFirst => open.next(),
            QuotaMode::BalanceFirst => {
                let mut open: Vec<usize> = open.collect();
                open.sort_by_key(|&c| c);
                // Least filled by tally/target; earliest declared on ties.
                open.into_iter().reduce(|best, c| {
                    let (tb, gb) = (self.tallies[best] as u64, self.quota.cells[best].target as u64);
                    let (tc, gc) = (self.tallies[c] as u64, self.quota.cells[c].target as u64);
                    if tc * gb < tb * gc {
                        c
                    } else {
                        best
                    }
                })
            }
        }
    }

    fn try_place(&mut self, idx: usize) -> bool {
        let bins = self.bins_of(idx);
        match self.choose_cell(idx, bins.as_ref()) {
            Some(cell) => {
                self.tallies[cell] += 1;
                self.accepted.push(Slot {
                    seen_idx: idx,
                    cell,
                    bins: bins.unwrap_or_default(),
                });
                self.check_stop();
                true
            }
            None => false,
        }
    }

    /// Offer the next profile of the stream.
    pub fn offer(&mut self, profile: EnrichedProfile) -> Offer {
        if self.stopped {
            return Offer::Ignored;
        }
        let idx = self.seen.len();
        self.seen.push(profile);
        self.since_checkpoint += 1;
        let outcome = if self.try_place(idx) {
            Offer::Accepted
        } else {
            self.candidates.insert(idx);
            Offer::Candidate
        };
        if !self.stopped && self.checkpoint_every > 0 && self.since_checkpoint >= self.checkpoint_every {
            self.checkpoint();
        }
        outcome
    }

    /// Recompute means, re-validate the team and re-offer candidates.
    pub fn checkpoint(&mut self) {
        if self.stopped {
            return;
        }
        self.since_checkpoint = 0;
        self.checkpoints += 1;
        let dims = self.rule.dimensions.clone();
        let means = match self.rule.reference {
            ReferenceGroup::Accepted if !self.accepted.is_empty() => {
                self.means_count = self.accepted.len();
                group_means(self.accepted.iter().map(|s| &self.seen[s.seen_idx]), &dims)
            }
            _ => {
                self.means_count = self.seen.len();
                group_means(&self.seen, &dims)
            }
        };
        self.means = means;

        let mut newly_released = Vec::new();
        let mut kept = Vec::with_capacity(self.accepted.len());
        for mut slot in std::mem::take(&mut self.accepted) {
            let bins = self.bins_of(slot.seen_idx).unwrap_or_default();
            if self.quota.cells[slot.cell]
                .pattern
                .matches(&self.seen[slot.seen_idx], Some(&bins))
            {
                slot.bins = bins;
                kept.push(slot);
            } else {
                self.tallies[slot.cell] -= 1;
                newly_released.push(slot.seen_idx);
            }
        }
        self.accepted = kept;
        self.released_total += newly_released.len();

        self.candidates.extend(std::mem::take(&mut self.released));
        let waiting: Vec<usize> = self.candidates.iter().copied().collect();
        for idx in waiting {
            if self.stopped {
                break;
            }
            if self.try_place(idx) {
                self.candidates.remove(&idx);
            }
        }
        self.released = newly_released;
        self.check_stop();
    }

    /// Close the stream: a final checkpoint covers arrivals since the last one.
    pub fn finish(mut self) -> ScreeningState {
        if !self.stopped && (self.since_checkpoint > 0 || self.checkpoints == 0) && !self.seen.is_empty() {
            self.checkpoint();
        }
        let tallies = self
            .quota
            .cells
            .iter()
            .zip(&self.tallies)
            .map(|(c, t)| (c.name.clone(), *t))
            .collect();
        let mut slots = self.accepted;
        slots.sort_by_key(|s| s.seen_idx);
        let accepted = slots
            .into_iter()
            .map(|s| AcceptedProfile {
                profile: self.seen[s.seen_idx].clone(),
                cell: self.quota.cells[s.cell].name.clone(),
                bins: s.bins,
            })
            .collect();
        ScreeningState {
            accepted,
            tallies,
            pool_statistics: PoolStatistics {
                means: self.means.unwrap_or_default(),
                count: self.means_count,
            },
            stopped: self.stopped,
            seen: self.seen.len(),
            checkpoints: self.checkpoints,
            released: self.released_total,
        }
    }
}

/// Screen a whole stream, stopping early once the quota is met.
pub fn screen_stream<I>(
    stream: I,
    quota: QuotaSpec,
    rule: CurvingRule,
    checkpoint_every: usize,
    cancel: CancelToken,
) -> Result<ScreeningState, ScreeningError>
where
    I: IntoIterator<Item = EnrichedProfile>,
{
    let mut screener = Screener::new(quota, rule, checkpoint_every, cancel)?;
    for p in stream {
        if screener.is_stopped() {
            break;
        }
        screener.offer(p);
    }
    Ok(screener.finish())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub total: usize,
    pub bartle: BTreeMap<BartleType, usize>,
    /// `(high, low)` per curved dimension.
    pub bins: BTreeMap<Trait, (usize, usize)>,
    pub means: BTreeMap<Trait, f64>,
}

/// Counts per Bartle type and per dimension × bin for a profile set.
pub fn distribution_report(
    profiles: &[EnrichedProfile],
    rule: &CurvingRule,
) -> Result<DistributionReport, ScreeningError> {
    let labels = curve_scores(profiles, rule)?;
    let means = group_means(profiles, &rule.dimensions).ok_or(ScreeningError::EmptySet)?;
    let mut bartle: BTreeMap<BartleType, usize> = BartleType::ALL.iter().map(|b| (*b, 0)).collect();
    for p in profiles {
        *bartle.get_mut(&p.bartle_type).expect("all types present") += 1;
    }
    let mut bins: BTreeMap<Trait, (usize, usize)> = rule.dimensions.iter().map(|d| (*d, (0, 0))).collect();
    for l in &labels {
        for (d, b) in l {
            let e = bins.get_mut(d).expect("curved dimension");
            match b {
                Bin::High => e.0 += 1,
                Bin::Low => e.1 += 1,
            }
        }
    }
    Ok(DistributionReport {
        total: profiles.len(),
        bartle,
        bins,
        means,
    })
}

impl DistributionReport {
    /// `facet,value,count` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("facet,value,count\n");
        for (b, n) in &self.bartle {
            out.push_str(&format!("bartle,{b},{n}\n"));
        }
        for (d, (hi, lo)) in &self.bins {
            out.push_str(&format!("{d},high,{hi}\n{d},low,{lo}\n"));
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("profiles: {}\n\n{:<12} {:>6}\n", self.total, "bartle", "count");
        for (b, n) in &self.bartle {
            out.push_str(&format!("{:<12} {:>6}\n", b.as_str(), n));
        }
        out.push_str(&format!(
            "\n{:<18} {:>6} {:>6} {:>6}\n",
            "dimension", "mean", "high", "low"
        ));
        for (d, (hi, lo)) in &self.bins {
            out.push_str(&format!(
                "{:<18} {:>6.3} {:>6} {:>6}\n",
                d.name(),
                self.means[d],
                hi,
                lo
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::onboarding::BigFive;
    use crate::pool::BasicProfile;

    fn prof(id: usize, bartle: BartleType, openness: f64) -> EnrichedProfile {
        let mut big_five = BigFive::uniform(3.0);
        big_five.openness = openness;
        EnrichedProfile {
            basic: BasicProfile {
                profile_id: format!("p{id}"),
                pool: "t".into(),
                persona_text: "x".into(),
                structured_fields: Default::default(),
            },
            bartle_type: bartle,
            big_five,
            raw_answers: Default::default(),
        }
    }

    fn openness_rule() -> CurvingRule {
        CurvingRule {
            dimensions: vec![Trait::Openness],
            reference: ReferenceGroup::Surveyed,
        }
    }

    #[test]
    fn curving_example() {
        let ps: Vec<_> = [4.8, 4.9, 4.5]
            .iter()
            .enumerate()
            .map(|(i, o)| prof(i, BartleType::Explorer, *o))
            .collect();
        let labels: Vec<Bin> = curve_scores(&ps, &openness_rule())
            .unwrap()
            .into_iter()
            .map(|b| b[&Trait::Openness])
            .collect();
        assert_eq!(labels, vec![Bin::High, Bin::High, Bin::Low]);
    }

    #[test]
    fn exactly_at_mean_is_low() {
        let ps: Vec<_> = [4.0, 5.0, 4.5]
            .iter()
            .enumerate()
            .map(|(i, o)| prof(i, BartleType::Explorer, *o))
            .collect();
        let labels = curve_scores(&ps, &openness_rule()).unwrap();
        assert_eq!(labels[2][&Trait::Openness], Bin::Low);
        assert_eq!(bin_for(4.70, 4.69), Bin::High);
        assert_eq!(bin_for(4.69, 4.69), Bin::Low);
    }

    #[test]
    fn empty_set_errors() {
        assert_eq!(curve_scores(&[], &openness_rule()), Err(ScreeningError::EmptySet));
        assert!(distribution_report(&[], &openness_rule()).is_err());
    }

    #[test]
    fn first_fit_with_early_stop() {
        let quota = QuotaSpec::from_toml(
            r#"
            [[cell]]
            bartle = "Explorer"
            target = 1
            "#,
        )
        .unwrap();
        let cancel = CancelToken::new();
        let mut s = Screener::new(quota, openness_rule(), 10, cancel.clone()).unwrap();
        assert_eq!(s.offer(prof(0, BartleType::Socializer, 3.0)), Offer::Candidate);
        assert!(!cancel.is_cancelled());
        assert_eq!(s.offer(prof(1, BartleType::Explorer, 3.0)), Offer::Accepted);
        assert!(cancel.is_cancelled());
        assert_eq!(s.offer(prof(2, BartleType::Explorer, 3.0)), Offer::Ignored);
        let state = s.finish();
        assert_eq!(state.accepted.len(), 1);
        assert_eq!(state.accepted[0].profile.basic.profile_id, "p1");
    }

    #[test]
    fn zero_targets_stop_immediately() {
        let quota = QuotaSpec::from_toml("[[cell]]\nbartle = \"Killer\"\ntarget = 0\n").unwrap();
        let cancel = CancelToken::new();
        let state = screen_stream(
            vec![prof(0, BartleType::Killer, 3.0)],
            quota,
            openness_rule(),
            5,
            cancel.clone(),
        )
        .unwrap();
        assert!(state.stopped && cancel.is_cancelled());
        assert!(state.accepted.is_empty());
        assert_eq!(state.seen, 0);
    }

    #[test]
    fn bin_cells_wait_for_first_checkpoint() {
        let quota = QuotaSpec::from_toml("[[cell]]\nbartle = \"*\"\nopenness = \"high\"\ntarget = 1\n").unwrap();
        let mut s = Screener::new(quota, openness_rule(), 2, CancelToken::new()).unwrap();
        assert_eq!(s.offer(prof(0, BartleType::Killer, 5.0)), Offer::Candidate);
        // Second arrival triggers the checkpoint; the waiting 5.0 profile is above the 4.0 mean.
        s.offer(prof(1, BartleType::Killer, 3.0));
        assert!(s.is_stopped());
        let st = s.finish();
        assert_eq!(st.accepted[0].profile.basic.profile_id, "p0");
        assert_eq!(st.accepted[0].bins[&Trait::Openness], Bin::High);
    }

    #[test]
    fn checkpoint_releases_profiles_whose_bin_moved() {
        let quota = QuotaSpec::from_toml("[[cell]]\nbartle = \"*\"\nopenness = \"high\"\ntarget = 4\n").unwrap();
        let mut s = Screener::new(quota, openness_rule(), 2, CancelToken::new()).unwrap();
        s.offer(prof(0, BartleType::Killer, 4.0));
        s.offer(prof(1, BartleType::Killer, 2.0)); // checkpoint: mean 3.0, p0 high -> accepted
        assert_eq!(s.accepted_count(), 1);
        s.offer(prof(2, BartleType::Killer, 5.0));
        s.offer(prof(3, BartleType::Killer, 5.0)); // checkpoint: mean 4.0, p0 == mean -> released
        assert_eq!(s.accepted_count(), 2);
        let st = s.finish();
        assert_eq!(st.released, 1);
        assert!(st.accepted.iter().all(|a| a.profile.big_five.openness > 4.0));
        assert_eq!(st.tallies.values().sum::<u32>(), 2);
    }

    #[test]
    fn balance_first_prefers_least_filled() {
        let quota = QuotaSpec::from_toml(
            r#"
            [[cell]]
            name = "any-a"
            target = 2
            [[cell]]
            name = "any-b"
            target = 2
            "#,
        )
        .unwrap();
        let mut s = Screener::new(quota, openness_rule(), 0, CancelToken::new()).unwrap();
        for i in 0..4 {
            s.offer(prof(i, BartleType::Achiever, 3.0));
        }
        let st = s.finish();
        let cells: Vec<&str> = st.accepted.iter().map(|a| a.cell.as_str()).collect();
        assert_eq!(cells, vec!["any-a", "any-b", "any-a", "any-b"]);
    }

    #[test]
    fn priority_first_fills_in_order() {
        let quota = QuotaSpec::from_toml(
            r#"
            mode = "priority_first"
            priority = ["second", "first"]
            [[cell]]
            name = "first"
            target = 2
            [[cell]]
            name = "second"
            target = 2
            "#,
        )
        .unwrap();
        let mut s = Screener::new(quota, openness_rule(), 0, CancelToken::new()).unwrap();
        for i in 0..3 {
            s.offer(prof(i, BartleType::Achiever, 3.0));
        }
        let st = s.finish();
        let cells: Vec<&str> = st.accepted.iter().map(|a| a.cell.as_str()).collect();
        assert_eq!(cells, vec!["second", "second", "first"]);
    }

    #[test]
    fn priority_must_cover_cells() {
        let err = QuotaSpec::from_toml(
            r#"
            mode = "priority_first"
            priority = ["a"]
            [[cell]]
            name = "a"
            target = 1
            [[cell]]
            name = "b"
            target = 1
            "#,
        );
        assert!(err.is_err());
    }

    #[test]
    fn report_single_profile() {
        let r = distribution_report(&[prof(0, BartleType::Killer, 4.0)], &openness_rule()).unwrap();
        assert_eq!(r.bartle.values().filter(|n| **n > 0).count(), 1);
        assert_eq!(r.bartle[&BartleType::Killer], 1);
        assert_eq!(r.bins[&Trait::Openness], (0, 1));
        assert!(r.to_csv().contains("bartle,Killer,1\n"));
    }

    #[test]
    fn balanced_quota_shape() {
        let q = QuotaSpec::balanced(&[Trait::Openness], 30);
        assert_eq!(q.cells.len(), 8);
        assert_eq!(q.total_target(), 240);
    }
}
