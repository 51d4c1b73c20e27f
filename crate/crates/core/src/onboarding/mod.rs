//! Onboarding: role-play proxies built from basic profiles answer intake
//! surveys, and the scored answers become enriched profiles.

pub mod survey;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::gateway::{ChatRequest, Gateway, GatewayError, Message};
use crate::pool::BasicProfile;
use crate::workers::{bounded_map, CancelToken};

pub use survey::{score_survey, AnswerKind, IntakeSurvey, ScoredAttributes, ScoringRule, SurveyItem};

/// Re-asks allowed after an unreadable answer.
pub const MAX_REASKS: usize = 2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OnboardingError {
    #[error("survey definition: {0}")]
    Survey(String),
    #[error("survey {survey}: no answer for item {item:?}")]
    MissingAnswer { survey: String, item: String },
    #[error("item {item:?}: invalid answer {answer:?}")]
    InvalidAnswer { item: String, answer: String },
    #[error("item {item:?}: no usable answer after {attempts} attempts (last reply {last:?})")]
    Unparseable {
        item: String,
        attempts: usize,
        last: String,
    },
    #[error("profile lacks {0}")]
    Incomplete(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BartleType {
    Achiever,
    Explorer,
    Killer,
    Socializer,
}

impl BartleType {
    pub const ALL: [BartleType; 4] = [Self::Achiever, Self::Explorer, Self::Killer, Self::Socializer];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Achiever => "Achiever",
            Self::Explorer => "Explorer",
            Self::Killer => "Killer",
            Self::Socializer => "Socializer",
        }
    }
}

impl fmt::Display for BartleType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BartleType {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|b| b.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("not a Bartle type: {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trait {
    Openness,
    Conscientiousness,
    Extraversion,
    Agreeableness,
    Neuroticism,
}

impl Trait {
    pub const ALL: [Trait; 5] = [
        Self::Openness,
        Self::Conscientiousness,
        Self::Extraversion,
        Self::Agreeableness,
        Self::Neuroticism,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Openness => "openness",
            Self::Conscientiousness => "conscientiousness",
            Self::Extraversion => "extraversion",
            Self::Agreeableness => "agreeableness",
            Self::Neuroticism => "neuroticism",
        }
    }
}

impl fmt::Display for Trait {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Trait {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("not a Big Five dimension: {s:?}"))
    }
}

/// Big Five scores on the 1–5 scale. Serialized with one-letter keys.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BigFive {
    #[serde(rename = "o")]
    pub openness: f64,
    #[serde(rename = "c")]
    pub conscientiousness: f64,
    #[serde(rename = "e")]
    pub extraversion: f64,
    #[serde(rename = "a")]
    pub agreeableness: f64,
    #[serde(rename = "n")]
    pub neuroticism: f64,
}

impl BigFive {
    pub fn uniform(v: f64) -> Self {
        Self {
            openness: v,
            conscientiousness: v,
            extraversion: v,
            agreeableness: v,
            neuroticism: v,
        }
    }

    pub fn get(&self, t: Trait) -> f64 {
        match t {
            Trait::Openness => self.openness,
            Trait::Conscientiousness => self.conscientiousness,
            Trait::Extraversion => self.extraversion,
            Trait::Agreeableness => self.agreeableness,
            Trait::Neuroticism => self.neuroticism,
        }
    }

    pub fn set(&mut self, t: Trait, v: f64) {
        match t {
            Trait::Openness => self.openness = v,
            Trait::Conscientiousness => self.conscientiousness = v,
            Trait::Extraversion => self.extraversion = v,
            Trait::Agreeableness => self.agreeableness = v,
            Trait::Neuroticism => self.neuroticism = v,
        }
    }

    /// "openness 4.20, conscientiousness 3.80, ..." for prompts.
    pub fn summary(&self) -> String {
        Trait::ALL
            .iter()
            .map(|t| format!("{} {:.2}", t.name(), self.get(*t)))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichedProfile {
    pub basic: BasicProfile,
    pub bartle_type: BartleType,
    pub big_five: BigFive,
    pub raw_answers: BTreeMap<String, String>,
}

/// On-disk form of an enriched profile (the persona text stays in its pool).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichedRecord {
    pub profile_id: String,
    pub pool: String,
    pub bartle_type: BartleType,
    pub big_five: BigFive,
    pub raw_answers: BTreeMap<String, String>,
}

impl EnrichedProfile {
    pub fn to_record(&self) -> EnrichedRecord {
        EnrichedRecord {
            profile_id: self.basic.profile_id.clone(),
            pool: self.basic.pool.clone(),
            bartle_type: self.bartle_type,
            big_five: self.big_five,
            raw_answers: self.raw_answers.clone(),
        }
    }

    pub fn id(&self) -> &str {
        &self.basic.profile_id
    }
}

impl EnrichedRecord {
    pub fn into_profile(self, basic: BasicProfile) -> EnrichedProfile {
        EnrichedProfile {
            basic,
            bartle_type: self.bartle_type,
            big_five: self.big_five,
            raw_answers: self.raw_answers,
        }
    }
}

/// System prompt for a survey-answering proxy.
pub fn proxy_prompt(profile: &BasicProfile) -> String {
    format!(
        "You are role-playing the person described below and are completing a questionnaire as them.\n\
         Answer every question the way this person would, staying consistent with their background.\n\n\
         Persona:\n{}\n",
        profile.persona()
    )
}

fn item_prompt(item: &SurveyItem) -> String {
    let mut text = format!("Item {}: {}\n", item.id, item.question);
    match &item.answer_kind {
        AnswerKind::Likert1To5 => {
            text.push_str("Scale: 1 = strongly disagree, 2 = disagree, 3 = neutral, 4 = agree, 5 = strongly agree.\n");
            text.push_str("Reply with exactly one bracketed number, for example [3].");
        }
        AnswerKind::SingleChoice { options } => {
            for o in options {
                text.push_str(&format!("[{}] {}\n", o.id, o.text));
            }
            text.push_str(&format!(
                "Reply with exactly one bracketed option, for example [{}].",
                options.first().map(|o| o.id.as_str()).unwrap_or("A")
            ));
        }
    }
    text
}

/// Content of the first `[...]` in a reply.
pub fn first_bracketed(text: &str) -> Option<&str> {
    let start = text.find('[')?;
    let len = text[start + 1..].find(']')?;
    Some(&text[start + 1..start + 1 + len])
}

/// Ask every item on the routed path, in order.
pub fn administer_survey(
    profile: &BasicProfile,
    survey: &IntakeSurvey,
    gateway: &Gateway,
) -> Result<BTreeMap<String, String>, OnboardingError> {
    administer_survey_with(&proxy_prompt(profile), &profile.profile_id, survey, gateway)
}

/// [`administer_survey`] under an arbitrary system prompt. Request tags
/// start with `tag_prefix`.
pub fn administer_survey_with(
    system: &str,
    tag_prefix: &str,
    survey: &IntakeSurvey,
    gateway: &Gateway,
) -> Result<BTreeMap<String, String>, OnboardingError> {
    let mut answers = BTreeMap::new();
    let mut cur = Some(0usize);
    while let Some(i) = cur {
        let item = &survey.items[i];
        let mut messages = vec![Message::user(item_prompt(item))];
        let mut accepted = None;
        let mut last = String::new();
        for attempt in 0..=MAX_REASKS {
            let req = ChatRequest::new(
                format!("{tag_prefix}/{}/{}/{attempt}", survey.survey_id, item.id),
                system,
            )
            .with_messages(messages.clone());
            let reply = gateway.complete(&req)?.text;
            if let Some(answer) = first_bracketed(&reply).and_then(|t| item.accept(t)) {
                accepted = Some(answer);
                break;
            }
            messages.push(Message::assistant(reply.clone()));
            messages.push(Message::user(format!(
                "That reply could not be read. Answer again with exactly one bracketed token.\n\n{}",
                item_prompt(item)
            )));
            last = reply;
        }
        let answer = accepted.ok_or_else(|| OnboardingError::Unparseable {
            item: item.id.clone(),
            attempts: MAX_REASKS + 1,
            last,
        })?;
        cur = survey.next_after(i, &answer);
        answers.insert(item.id.clone(), answer);
    }
    Ok(answers)
}

/// Survey one profile end to end and assemble its enriched record.
pub fn onboard_profile(
    profile: &BasicProfile,
    surveys: &[IntakeSurvey],
    gateway: &Gateway,
) -> Result<EnrichedProfile, OnboardingError> {
    let mut raw_answers = BTreeMap::new();
    let mut dims: BTreeMap<String, f64> = BTreeMap::new();
    let mut category = None;
    for survey in surveys {
        let answers = administer_survey(profile, survey, gateway)?;
        let scored = score_survey(survey, &answers)?;
        dims.extend(scored.dimensions);
        if scored.category.is_some() {
            category = scored.category;
        }
        raw_answers.extend(answers);
    }
    let bartle_type = category
        .ok_or_else(|| OnboardingError::Incomplete("a Bartle type".into()))?
        .parse::<BartleType>()
        .map_err(OnboardingError::Incomplete)?;
    let mut big_five = BigFive::uniform(f64::NAN);
    for t in Trait::ALL {
        let v = dims
            .get(t.name())
            .copied()
            .ok_or_else(|| OnboardingError::Incomplete(format!("a {} score", t.name())))?;
        big_five.set(t, v);
    }
    Ok(EnrichedProfile {
        basic: profile.clone(),
        bartle_type,
        big_five,
        raw_answers,
    })
}

/// Check a survey set before a run: non-empty, each valid, item ids disjoint.
pub fn validate_survey_set(surveys: &[IntakeSurvey]) -> Result<(), OnboardingError> {
    if surveys.is_empty() {
        return Err(OnboardingError::Survey("at least one survey is required".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    for s in surveys {
        s.validate()?;
        for it in &s.items {
            if !seen.insert(it.id.as_str()) {
                return Err(OnboardingError::Survey(format!(
                    "item id {:?} used by two surveys",
                    it.id
                )));
            }
        }
    }
    Ok(())
}

/// One finished profile, tagged with its position in the input.
#[derive(Debug, Clone)]
pub struct OnboardingEvent {
    pub index: usize,
    pub outcome: Result<EnrichedProfile, OnboardingError>,
}

#[derive(Debug, Clone, Copy)]
pub struct OnboardingOptions {
    pub workers: usize,
    /// Process profiles in waves of `workers`, delivering each wave to the
    /// sink in input order and checking cancellation between waves. Makes
    /// the set of surveyed profiles independent of thread timing.
    pub lockstep: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OnboardingSummary {
    pub input: usize,
    pub emitted: usize,
    pub skipped: usize,
    pub cancelled: usize,
    /// `(profile_id, reason)` for every skipped profile, in input order.
    pub skipped_profiles: Vec<(String, String)>,
}

/// Survey a batch of profiles in parallel, handing each outcome to `sink` as
/// soon as it is available. Profiles not yet started when `cancel` fires
/// are counted as cancelled. Per-profile failures never abort the run.
pub fn run_onboarding(
    profiles: &[BasicProfile],
    surveys: &[IntakeSurvey],
    gateway: &Gateway,
    sink: &(dyn Fn(OnboardingEvent) + Sync),
    cancel: &CancelToken,
    options: OnboardingOptions,
) -> Result<OnboardingSummary, OnboardingError> {
    validate_survey_set(surveys)?;
    let workers = options.workers.max(1);
    let processed: Vec<(usize, Option<String>)> = if options.lockstep {
        let mut done = Vec::new();
        for (w, wave) in profiles.chunks(workers).enumerate() {
            if cancel.is_cancelled() {
                break;
            }
            let outcomes = bounded_map(wave, workers, |_, p| onboard_profile(p, surveys, gateway));
            for (k, outcome) in outcomes.into_iter().enumerate() {
                let index = w * workers + k;
                done.push((index, outcome.as_ref().err().map(|e| e.to_string())));
                sink(OnboardingEvent { index, outcome });
            }
        }
        done
    } else {
        let next = AtomicUsize::new(0);
        let done = std::sync::Mutex::new(Vec::new());
        std::thread::scope(|scope| {
            for _ in 0..workers.min(profiles.len().max(1)) {
                scope.spawn(|| loop {
                    if cancel.is_cancelled() {
                        break;
                    }
                    let index = next.fetch_add(1, Ordering::SeqCst);
                    if index >= profiles.len() {
                        break;
                    }
                    let outcome = onboard_profile(&profiles[index], surveys, gateway);
                    let failure = outcome.as_ref().err().map(|e| e.to_string());
                    sink(OnboardingEvent { index, outcome });
                    done.lock().expect("poisoned").push((index, failure));
                });
            }
        });
        let mut done = done.into_inner().expect("poisoned");
        done.sort_by_key(|(i, _)| *i);
        done
    };

    let mut summary = OnboardingSummary {
        input: profiles.len(),
        ..Default::default()
    };
    for (index, failure) in processed {
        match failure {
            None => summary.emitted += 1,
            Some(reason) => {
                log::warn!("skipping profile {}: {reason}", profiles[index].profile_id);
                summary.skipped += 1;
                summary
                    .skipped_profiles
                    .push((profiles[index].profile_id.clone(), reason));
            }
        }
    }
    summary.cancelled = summary.input - summary.emitted - summary.skipped;
    Ok(summary)
}
