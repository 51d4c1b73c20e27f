//! Time and cost comparison across study configurations. Fields are
//! rendered as recorded; nothing is recomputed.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AnalysisError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub team: String,
    pub size: String,
    pub interactions_per_player: String,
    pub recruit_minutes: String,
    pub interact_minutes: String,
    pub post_interact_minutes: String,
    pub time_per_player: String,
    pub cost_per_player: String,
    pub cost_per_insight: String,
    #[serde(default)]
    pub note: String,
}

impl LedgerRow {
    fn quantities(&self) -> [(&'static str, &str); 8] {
        [
            ("size", &self.size),
            ("interactions_per_player", &self.interactions_per_player),
            ("recruit_minutes", &self.recruit_minutes),
            ("interact_minutes", &self.interact_minutes),
            ("post_interact_minutes", &self.post_interact_minutes),
            ("time_per_player", &self.time_per_player),
            ("cost_per_player", &self.cost_per_player),
            ("cost_per_insight", &self.cost_per_insight),
        ]
    }

    pub fn cells(&self) -> [&str; 9] {
        [
            &self.team,
            &self.size,
            &self.interactions_per_player,
            &self.recruit_minutes,
            &self.interact_minutes,
            &self.post_interact_minutes,
            &self.time_per_player,
            &self.cost_per_player,
            &self.cost_per_insight,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CostTimeLedger {
    #[serde(rename = "row")]
    pub rows: Vec<LedgerRow>,
}

pub const LEDGER_COLUMNS: [&str; 9] = [
    "Team",
    "Size",
    "Inter.",
    "Recruit",
    "Interact",
    "Post",
    "Time-per-P",
    "Cost-per-P",
    "Cost-per-Insight",
];

impl CostTimeLedger {
    pub fn from_toml(text: &str) -> Result<Self, AnalysisError> {
        let l: Self = toml::from_str(text).map_err(|e| AnalysisError::Input(e.to_string()))?;
        l.validate()?;
        Ok(l)
    }

    pub fn load(path: &Path) -> Result<Self, AnalysisError> {
        let text = fs::read_to_string(path).map_err(|e| AnalysisError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Every quantity parses as a non-negative number (a leading `$` is
    /// allowed); team names are unique.
    pub fn validate(&self) -> Result<(), AnalysisError> {
        let mut teams = std::collections::BTreeSet::new();
        for r in &self.rows {
            if !teams.insert(r.team.as_str()) {
                return Err(AnalysisError::Input(format!("duplicate ledger row {:?}", r.team)));
            }
            for (name, v) in r.quantities() {
                let num: f64 = v
                    .trim()
                    .trim_start_matches('$')
                    .parse()
                    .map_err(|_| AnalysisError::Input(format!("{}: {name} {v:?} is not a number", r.team)))?;
                if num < 0.0 {
                    return Err(AnalysisError::OutOfRange(format!("{}: {name} is negative", r.team)));
                }
            }
        }
        Ok(())
    }

    pub fn row(&self, team: &str) -> Option<&LedgerRow> {
        self.rows.iter().find(|r| r.team.eq_ignore_ascii_case(team))
    }
}

/// Aligned text table for `teams`, in the given order.
pub fn cost_time_report(ledger: &CostTimeLedger, teams: &[&str]) -> Result<String, AnalysisError> {
    let rows: Vec<&LedgerRow> = teams
        .iter()
        .map(|t| ledger.row(t).ok_or_else(|| AnalysisError::MissingRow(t.to_string())))
        .collect::<Result<_, _>>()?;
    let mut widths: Vec<usize> = LEDGER_COLUMNS.iter().map(|c| c.len()).collect();
    for r in &rows {
        for (w, c) in widths.iter_mut().zip(r.cells()) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[&str]| -> String {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        padded.join(" | ").trim_end().to_string()
    };
    let mut out = line(&LEDGER_COLUMNS);
    out.push('\n');
    out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"));
    out.push('\n');
    for r in rows {
        out.push_str(&line(&r.cells()));
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE: &str = r#"
[[row]]
team = "Pilot"
size = "4"
interactions_per_player = "2"
recruit_minutes = "10"
interact_minutes = "20"
post_interact_minutes = "5"
time_per_player = "8.75"
cost_per_player = "$1.50"
cost_per_insight = "$0.75"
note = "test"
"#;

    #[test]
    fn single_row_table() {
        let l = CostTimeLedger::from_toml(ONE).unwrap();
        let t = cost_time_report(&l, &["Pilot"]).unwrap();
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("Team"));
        assert!(lines[2].contains("$1.50") && lines[2].contains("8.75"));
    }

    #[test]
    fn missing_row_is_an_error() {
        let l = CostTimeLedger::from_toml(ONE).unwrap();
        assert_eq!(
            cost_time_report(&l, &["Pilot", "Local"]),
            Err(AnalysisError::MissingRow("Local".into()))
        );
    }

    #[test]
    fn negative_or_non_numeric_fields_rejected() {
        assert!(CostTimeLedger::from_toml(&ONE.replace("\"$1.50\"", "\"-1\"")).is_err());
        assert!(CostTimeLedger::from_toml(&ONE.replace("\"8.75\"", "\"n/a\"")).is_err());
    }
}
