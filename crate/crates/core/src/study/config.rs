//! Study configuration file.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::StudyError;
use crate::gateway::BackendConfig;
use crate::onboarding::Trait;
use crate::screening::ReferenceGroup;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Onboarding,
    Screening,
    Experiencing,
    Feedback,
    Analysis,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Self::Onboarding,
        Self::Screening,
        Self::Experiencing,
        Self::Feedback,
        Self::Analysis,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Onboarding => "onboarding",
            Self::Screening => "screening",
            Self::Experiencing => "experiencing",
            Self::Feedback => "feedback",
            Self::Analysis => "analysis",
        }
    }

    /// The stage whose artifacts this one reads.
    pub fn input(self) -> Option<Stage> {
        match self {
            Self::Onboarding => None,
            Self::Screening => Some(Self::Onboarding),
            Self::Experiencing => Some(Self::Screening),
            Self::Feedback => Some(Self::Experiencing),
            Self::Analysis => Some(Self::Feedback),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .or(match s.as_str() {
                "onboard" => Some(Self::Onboarding),
                "screen" => Some(Self::Screening),
                "experience" => Some(Self::Experiencing),
                "analyze" | "analyse" => Some(Self::Analysis),
                _ => None,
            })
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSection {
    /// Registry manifest listing the pools.
    pub registry: PathBuf,
    /// Pools to draw from, concatenated in this order before sampling.
    pub pools: Vec<String>,
    /// Profiles to draw. Defaults to every profile of the selected pools.
    #[serde(default)]
    pub sample_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OnboardingSection {
    pub surveys: Vec<PathBuf>,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScreeningSection {
    pub quota: PathBuf,
    #[serde(default = "default_checkpoint")]
    pub checkpoint_every: usize,
    /// Curved dimensions. Defaults to all five.
    #[serde(default)]
    pub dimensions: Option<Vec<Trait>>,
    #[serde(default)]
    pub reference_group: ReferenceGroup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperiencingSection {
    /// Directory of NPC fixture files.
    pub npcs: PathBuf,
    /// Encounters per player, taken from the NPC list in file order.
    #[serde(default)]
    pub interactions_per_player: Option<usize>,
    #[serde(default = "default_max_turns")]
    pub max_turns: usize,
    #[serde(default = "default_retries")]
    pub malformed_retries: usize,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackSection {
    /// Interview script; the bundled script when absent.
    #[serde(default)]
    pub interview: Option<PathBuf>,
    /// Optional post-play questionnaire in the intake survey format.
    #[serde(default)]
    pub questionnaire: Option<PathBuf>,
    #[serde(default = "yes")]
    pub think_aloud_digest: bool,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

impl Default for FeedbackSection {
    fn default() -> Self {
        Self {
            interview: None,
            questionnaire: None,
            think_aloud_digest: true,
            workers: default_workers(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    /// Coded transcripts of the agent and human studies.
    #[serde(default)]
    pub coded: Option<PathBuf>,
    #[serde(default)]
    pub codebook: Option<PathBuf>,
    #[serde(default)]
    pub synonyms: Option<PathBuf>,
    /// Coded agent transcripts for the frequency table.
    #[serde(default)]
    pub frequency_coded: Option<PathBuf>,
    #[serde(default)]
    pub frequency_codebook: Option<PathBuf>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub ratings: Option<PathBuf>,
    #[serde(default)]
    pub packets: Vec<PathBuf>,
    #[serde(default)]
    pub ledger: Option<PathBuf>,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            coded: None,
            codebook: None,
            synonyms: None,
            frequency_coded: None,
            frequency_codebook: None,
            repeats: default_repeats(),
            threshold: default_threshold(),
            ratings: None,
            packets: Vec::new(),
            ledger: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Resolved against the working directory. Every other relative path
    /// resolves against the config file's directory.
    pub output_dir: PathBuf,
    pub pool: PoolSection,
    pub onboarding: OnboardingSection,
    pub screening: ScreeningSection,
    pub experiencing: ExperiencingSection,
    #[serde(default)]
    pub feedback: FeedbackSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    /// Backend for every stage without an override.
    pub backend: BackendConfig,
    #[serde(default)]
    pub stage_backend: BTreeMap<Stage, BackendConfig>,
    /// Digest of the config text and overrides; set by [`StudyConfig::load`].
    #[serde(skip)]
    pub digest: String,
}

fn default_workers() -> usize {
    8
}
fn default_checkpoint() -> usize {
    100
}
fn default_max_turns() -> usize {
    30
}
fn default_retries() -> usize {
    2
}
fn default_temperature() -> f64 {
    0.7
}
fn default_repeats() -> usize {
    100
}
fn default_threshold() -> f64 {
    0.9
}
fn yes() -> bool {
    true
}

impl StudyConfig {
    /// Parse TOML and resolve relative paths against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, StudyError> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| StudyError::Config(e.to_string()))?;
        cfg.resolve(base);
        cfg.digest = format!("{:016x}", crate::rng::stable_hash([text]));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, StudyError> {
        let text = fs::read_to_string(path).map_err(|e| StudyError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base).map_err(|e| match e {
            StudyError::Config(m) => StudyError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let fix_opt = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                fix(p);
            }
        };
        fix(&mut self.pool.registry);
        self.onboarding.surveys.iter_mut().for_each(fix);
        fix(&mut self.screening.quota);
        fix(&mut self.experiencing.npcs);
        fix_opt(&mut self.feedback.interview);
        fix_opt(&mut self.feedback.questionnaire);
        let a = &mut self.analysis;
        for p in [
            &mut a.coded,
            &mut a.codebook,
            &mut a.synonyms,
            &mut a.frequency_coded,
            &mut a.frequency_codebook,
            &mut a.ratings,
            &mut a.ledger,
        ] {
            fix_opt(p);
        }
        a.packets.iter_mut().for_each(fix);
        fix_opt(&mut self.backend.mock_fixtures);
        for b in self.stage_backend.values_mut() {
            fix_opt(&mut b.mock_fixtures);
        }
    }

    /// Structural checks and existence of every referenced asset.
    pub fn validate(&self) -> Result<(), StudyError> {
        let bad = |m: String| Err(StudyError::Config(m));
        if self.name.trim().is_empty() {
            return bad("name must not be empty".into());
        }
        if self.pool.pools.is_empty() {
            return bad("pool.pools must name at least one pool".into());
        }
        if self.onboarding.surveys.is_empty() {
            return bad("onboarding.surveys must list at least one survey".into());
        }
        if self.experiencing.max_turns == 0 {
            return bad("experiencing.max_turns must be positive".into());
        }
        if self.experiencing.interactions_per_player == Some(0) {
            return bad("experiencing.interactions_per_player must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.analysis.threshold) {
            return bad("analysis.threshold must lie in [0, 1]".into());
        }
        if self.analysis.repeats == 0 {
            return bad("analysis.repeats must be positive".into());
        }
        if self.analysis.coded.is_some() != self.analysis.codebook.is_some() {
            return bad("analysis.coded and analysis.codebook go together".into());
        }
        if self.analysis.frequency_coded.is_some() != self.analysis.frequency_codebook.is_some() {
            return bad("analysis.frequency_coded and analysis.frequency_codebook go together".into());
        }
        let mut paths: Vec<&Path> = vec![&self.pool.registry, &self.screening.quota, &self.experiencing.npcs];
        paths.extend(self.onboarding.surveys.iter().map(PathBuf::as_path));
        let a = &self.analysis;
        paths.extend(
            [
                &self.feedback.interview,
                &self.feedback.questionnaire,
                &a.coded,
                &a.codebook,
                &a.synonyms,
                &a.frequency_coded,
                &a.frequency_codebook,
                &a.ratings,
                &a.ledger,
            ]
            .into_iter()
            .flatten()
            .map(PathBuf::as_path),
        );
        paths.extend(a.packets.iter().map(PathBuf::as_path));
        for b in std::iter::once(&self.backend).chain(self.stage_backend.values()) {
            b.validate().map_err(|e| StudyError::Config(e.to_string()))?;
            if let Some(p) = &b.mock_fixtures {
                paths.push(p);
            }
        }
        for p in paths {
            if !p.exists() {
                return bad(format!("{} does not exist", p.display()));
            }
        }
        Ok(())
    }

    /// Replace the provider of every backend.
    pub fn override_backend(&mut self, provider: &str) -> Result<(), StudyError> {
        for b in std::iter::once(&mut self.backend).chain(self.stage_backend.values_mut()) {
            b.provider = provider.to_string();
            b.validate().map_err(|e| StudyError::Config(e.to_string()))?;
        }
        self.digest = format!(
            "{:016x}",
            crate::rng::stable_hash([self.digest.as_str(), "backend", provider])
        );
        Ok(())
    }

    pub fn override_seed(&mut self, seed: u64) {
        self.seed = seed;
        let s = seed.to_string();
        self.digest = format!(
            "{:016x}",
            crate::rng::stable_hash([self.digest.as_str(), "seed", s.as_str()])
        );
    }

    /// The backend a stage uses, with the mock seed derived from the study
    /// seed and the stage name.
    pub fn backend_for(&self, stage: Stage) -> BackendConfig {
        let mut b = self.stage_backend.get(&stage).unwrap_or(&self.backend).clone();
        b.mock_seed = crate::rng::derive_seed(self.seed, stage.as_str());
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_and_aliases() {
        assert_eq!("experience".parse::<Stage>().unwrap(), Stage::Experiencing);
        assert_eq!("Feedback".parse::<Stage>().unwrap(), Stage::Feedback);
        assert!("dance".parse::<Stage>().is_err());
        assert_eq!(Stage::Screening.input(), Some(Stage::Onboarding));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = StudyConfig::from_toml("name = \"x\"\nbogus = 1\n", Path::new(".")).unwrap_err();
        assert!(matches!(err, StudyError::Config(_)));
    }

    #[test]
    fn demo_config_resolves_and_validates() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/demo/study.toml");
        let cfg = StudyConfig::load(&path).unwrap();
        assert!(cfg.pool.registry.is_absolute());
        assert_eq!(cfg.onboarding.surveys.len(), 2);
        assert_ne!(
            cfg.backend_for(Stage::Onboarding).mock_seed,
            cfg.backend_for(Stage::Feedback).mock_seed
        );
    }

    #[test]
    fn overrides_change_the_digest() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/demo/study.toml");
        let mut cfg = StudyConfig::load(&path).unwrap();
        let before = cfg.digest.clone();
        cfg.override_seed(7);
        assert_ne!(before, cfg.digest);
        assert!(cfg.override_backend("nonesuch").is_err());
    }
}
