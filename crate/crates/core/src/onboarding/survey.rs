//! Intake survey definitions, routing and scoring.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::OnboardingError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceOption {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnswerKind {
    #[serde(rename = "likert_1_5")]
    Likert1To5,
    SingleChoice {
        options: Vec<ChoiceOption>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyItem {
    pub id: String,
    pub question: String,
    #[serde(flatten)]
    pub answer_kind: AnswerKind,
}

impl SurveyItem {
    /// Normalize a raw answer token, or `None` if it is not acceptable.
    pub fn accept(&self, token: &str) -> Option<String> {
        let token = token.trim();
        match &self.answer_kind {
            AnswerKind::Likert1To5 => match token.parse::<u8>() {
                Ok(v @ 1..=5) => Some(v.to_string()),
                _ => None,
            },
            AnswerKind::SingleChoice { options } => options
                .iter()
                .find(|o| o.id.eq_ignore_ascii_case(token))
                .map(|o| o.id.clone()),
        }
    }
}

/// Jump taken when `item` is answered with `answer`. `goto = "end"` finishes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Route {
    pub from: String,
    pub answer: String,
    pub goto: String,
}

pub const END: &str = "end";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarity {
    #[serde(rename = "+")]
    Positive,
    #[serde(rename = "-", alias = "−")]
    Negative,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionEntry {
    pub item: String,
    pub dimension: String,
    pub polarity: Polarity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryEntry {
    pub item: String,
    pub option: String,
    pub category: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScoringRule {
    DimensionMean {
        #[serde(rename = "dimension")]
        dimension_map: Vec<DimensionEntry>,
    },
    CategoryMajority {
        #[serde(rename = "category")]
        category_map: Vec<CategoryEntry>,
    },
    /// Questionnaires collected for their answers only.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntakeSurvey {
    pub survey_id: String,
    #[serde(default)]
    pub version: String,
    #[serde(rename = "item")]
    pub items: Vec<SurveyItem>,
    #[serde(default)]
    pub routing: Vec<Route>,
    pub scoring: ScoringRule,
}

/// Scores produced by one survey.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoredAttributes {
    pub dimensions: BTreeMap<String, f64>,
    pub category: Option<String>,
}

impl IntakeSurvey {
    pub fn from_toml(text: &str) -> Result<Self, OnboardingError> {
        let survey: Self = toml::from_str(text).map_err(|e| OnboardingError::Survey(e.to_string()))?;
        survey.validate()?;
        Ok(survey)
    }

    pub fn load(path: &Path) -> Result<Self, OnboardingError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| OnboardingError::Survey(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| OnboardingError::Survey(format!("{}: {e}", path.display())))
    }

    fn index(&self) -> HashMap<&str, usize> {
        self.items
            .iter()
            .enumerate()
            .map(|(i, it)| (it.id.as_str(), i))
            .collect()
    }

    pub fn item(&self, id: &str) -> Option<&SurveyItem> {
        self.items.iter().find(|i| i.id == id)
    }

    /// Item ids unique, routes forward-only to existing items, every item
    /// reachable from the first, scoring maps consistent with item kinds.
    pub fn validate(&self) -> Result<(), OnboardingError> {
        let bad = |m: String| Err(OnboardingError::Survey(format!("{}: {m}", self.survey_id)));
        if self.items.is_empty() {
            return bad("no items".into());
        }
        let index = self.index();
        if index.len() != self.items.len() {
            return bad("duplicate item ids".into());
        }
        let mut routed: BTreeSet<(&str, &str)> = BTreeSet::new();
        for r in &self.routing {
            let Some(&from) = index.get(r.from.as_str()) else {
                return bad(format!("route from unknown item {:?}", r.from));
            };
            if self.items[from].accept(&r.answer).is_none() {
                return bad(format!("route on impossible answer {:?} to {:?}", r.answer, r.from));
            }
            if r.goto != END {
                match index.get(r.goto.as_str()) {
                    None => return bad(format!("route to unknown item {:?}", r.goto)),
                    Some(&to) if to <= from => {
                        return bad(format!("route {:?} -> {:?} does not move forward", r.from, r.goto))
                    }
                    _ => {}
                }
            }
            if !routed.insert((r.from.as_str(), r.answer.as_str())) {
                return bad(format!("duplicate route for {:?} = {:?}", r.from, r.answer));
            }
        }
        // Reachability over default successors plus routes.
        let mut reached = vec![false; self.items.len()];
        reached[0] = true;
        for i in 0..self.items.len() {
            if !reached[i] {
                continue;
            }
            let item = &self.items[i];
            let answers: Vec<String> = match &item.answer_kind {
                AnswerKind::Likert1To5 => (1..=5).map(|v| v.to_string()).collect(),
                AnswerKind::SingleChoice { options } => options.iter().map(|o| o.id.clone()).collect(),
            };
            for a in answers {
                if let Some(next) = self.next_after(i, &a) {
                    reached[next] = true;
                }
            }
        }
        if let Some(i) = reached.iter().position(|r| !r) {
            return bad(format!("item {:?} is unreachable", self.items[i].id));
        }
        match &self.scoring {
            ScoringRule::DimensionMean { dimension_map } => {
                let mut seen = BTreeSet::new();
                for e in dimension_map {
                    match self.item(&e.item) {
                        Some(SurveyItem {
                            answer_kind: AnswerKind::Likert1To5,
                            ..
                        }) => {}
                        Some(_) => return bad(format!("dimension item {:?} is not likert", e.item)),
                        None => return bad(format!("dimension map names unknown item {:?}", e.item)),
                    }
                    if !seen.insert(e.item.as_str()) {
                        return bad(format!("item {:?} scored twice", e.item));
                    }
                }
            }
            ScoringRule::CategoryMajority { category_map } => {
                let mut seen = BTreeSet::new();
                for e in category_map {
                    let Some(item) = self.item(&e.item) else {
                        return bad(format!("category map names unknown item {:?}", e.item));
                    };
                    if !matches!(item.answer_kind, AnswerKind::SingleChoice { .. }) || item.accept(&e.option).is_none()
                    {
                        return bad(format!(
                            "category map option {:?}/{:?} does not exist",
                            e.item, e.option
                        ));
                    }
                    if !seen.insert((e.item.as_str(), e.option.as_str())) {
                        return bad(format!("option {:?}/{:?} mapped twice", e.item, e.option));
                    }
                }
            }
            ScoringRule::None => {}
        }
        Ok(())
    }

    /// Index of the item that follows item `i` answered with `answer`.
    pub(crate) fn next_after(&self, i: usize, answer: &str) -> Option<usize> {
        let id = &self.items[i].id;
        match self
            .routing
            .iter()
            .find(|r| &r.from == id && r.answer.eq_ignore_ascii_case(answer))
        {
            Some(r) if r.goto == END => None,
            Some(r) => self.items.iter().position(|it| it.id == r.goto),
            None => (i + 1 < self.items.len()).then_some(i + 1),
        }
    }

    /// Item ids along the route implied by `answers`, stopping at the first
    /// unanswered item (which is included).
    pub fn routed_path(&self, answers: &BTreeMap<String, String>) -> Vec<&str> {
        let mut path = Vec::new();
        let mut cur = Some(0);
        while let Some(i) = cur {
            let id = self.items[i].id.as_str();
            path.push(id);
            cur = match answers.get(id) {
                Some(a) => self.next_after(i, a),
                None => None,
            };
        }
        path
    }
}

/// Score a completed answer set. Negative-polarity likert answers `s` count
/// as `6 - s`; majority ties go to the alphabetically first category.
pub fn score_survey(
    survey: &IntakeSurvey,
    answers: &BTreeMap<String, String>,
) -> Result<ScoredAttributes, OnboardingError> {
    let path = survey.routed_path(answers);
    for id in &path {
        if !answers.contains_key(*id) {
            return Err(OnboardingError::MissingAnswer {
                survey: survey.survey_id.clone(),
                item: id.to_string(),
            });
        }
    }
    let on_path: BTreeSet<&str> = path.into_iter().collect();
    let mut out = ScoredAttributes::default();
    match &survey.scoring {
        ScoringRule::DimensionMean { dimension_map } => {
            let mut sums: BTreeMap<&str, (f64, u32)> = BTreeMap::new();
            for e in dimension_map.iter().filter(|e| on_path.contains(e.item.as_str())) {
                let raw = &answers[&e.item];
                let s: f64 = raw.parse::<u8>().ok().filter(|v| (1..=5).contains(v)).ok_or_else(|| {
                    OnboardingError::InvalidAnswer {
                        item: e.item.clone(),
                        answer: raw.clone(),
                    }
                })? as f64;
                let v = match e.polarity {
                    Polarity::Positive => s,
                    Polarity::Negative => 6.0 - s,
                };
                let slot = sums.entry(e.dimension.as_str()).or_default();
                slot.0 += v;
                slot.1 += 1;
            }
            out.dimensions = sums
                .into_iter()
                .map(|(d, (sum, n))| (d.to_string(), sum / n as f64))
                .collect();
        }
        ScoringRule::CategoryMajority { category_map } => {
            let mut votes: BTreeMap<&str, u32> = BTreeMap::new();
            for e in category_map.iter().filter(|e| on_path.contains(e.item.as_str())) {
                if answers[&e.item].eq_ignore_ascii_case(&e.option) {
                    *votes.entry(e.category.as_str()).or_default() += 1;
                }
            }
            // BTreeMap iterates alphabetically; strict `>` keeps the earliest on ties.
            let mut best: Option<(&str, u32)> = None;
            for (cat, n) in votes {
                if best.is_none_or(|(_, m)| n > m) {
                    best = Some((cat, n));
                }
            }
            out.category = best.map(|(c, _)| c.to_string());
        }
        ScoringRule::None => {}
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn likert(id: &str) -> SurveyItem {
        SurveyItem {
            id: id.into(),
            question: format!("question {id}"),
            answer_kind: AnswerKind::Likert1To5,
        }
    }

    fn choice(id: &str, opts: &[&str]) -> SurveyItem {
        SurveyItem {
            id: id.into(),
            question: format!("question {id}"),
            answer_kind: AnswerKind::SingleChoice {
                options: opts
                    .iter()
                    .map(|o| ChoiceOption {
                        id: o.to_string(),
                        text: o.to_string(),
                    })
                    .collect(),
            },
        }
    }

    fn answers(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    fn dim_survey(entries: &[(&str, &str, Polarity)]) -> IntakeSurvey {
        IntakeSurvey {
            survey_id: "bf".into(),
            version: String::new(),
            items: entries.iter().map(|(id, _, _)| likert(id)).collect(),
            routing: vec![],
            scoring: ScoringRule::DimensionMean {
                dimension_map: entries
                    .iter()
                    .map(|(id, d, p)| DimensionEntry {
                        item: id.to_string(),
                        dimension: d.to_string(),
                        polarity: *p,
                    })
                    .collect(),
            },
        }
    }

    #[test]
    fn identity_mean() {
        let s = dim_survey(&[
            ("o1", "openness", Polarity::Positive),
            ("o2", "openness", Polarity::Positive),
        ]);
        let scored = score_survey(&s, &answers(&[("o1", "5"), ("o2", "5")])).unwrap();
        assert_eq!(scored.dimensions["openness"], 5.0);
    }

    #[test]
    fn negative_polarity_reverses() {
        let s = dim_survey(&[
            ("o1", "openness", Polarity::Positive),
            ("o2", "openness", Polarity::Negative),
        ]);
        let scored = score_survey(&s, &answers(&[("o1", "5"), ("o2", "5")])).unwrap();
        assert_eq!(scored.dimensions["openness"], 3.0);
    }

    #[test]
    fn majority_and_tie_break() {
        let items = vec![
            choice("b1", &["A", "B"]),
            choice("b2", &["A", "B"]),
            choice("b3", &["A", "B"]),
            choice("b4", &["A", "B"]),
        ];
        let mut category_map = Vec::new();
        for it in &items {
            category_map.push(CategoryEntry {
                item: it.id.clone(),
                option: "A".into(),
                category: "Explorer".into(),
            });
            category_map.push(CategoryEntry {
                item: it.id.clone(),
                option: "B".into(),
                category: "Killer".into(),
            });
        }
        let s = IntakeSurvey {
            survey_id: "bartle".into(),
            version: String::new(),
            items,
            routing: vec![],
            scoring: ScoringRule::CategoryMajority { category_map },
        };
        s.validate().unwrap();
        let three_one = answers(&[("b1", "A"), ("b2", "A"), ("b3", "A"), ("b4", "B")]);
        assert_eq!(
            score_survey(&s, &three_one).unwrap().category.as_deref(),
            Some("Explorer")
        );
        let tie = answers(&[("b1", "B"), ("b2", "B"), ("b3", "A"), ("b4", "A")]);
        assert_eq!(score_survey(&s, &tie).unwrap().category.as_deref(), Some("Explorer"));
    }

    #[test]
    fn routing_skips_items() {
        let s = IntakeSurvey {
            survey_id: "r".into(),
            version: String::new(),
            items: vec![choice("q1", &["yes", "no"]), likert("q2"), likert("q3")],
            routing: vec![Route {
                from: "q1".into(),
                answer: "no".into(),
                goto: "q3".into(),
            }],
            scoring: ScoringRule::None,
        };
        s.validate().unwrap();
        assert_eq!(s.routed_path(&answers(&[("q1", "no"), ("q3", "2")])), vec!["q1", "q3"]);
        assert_eq!(
            s.routed_path(&answers(&[("q1", "yes"), ("q2", "2"), ("q3", "2")])),
            vec!["q1", "q2", "q3"]
        );
        assert!(score_survey(&s, &answers(&[("q1", "no"), ("q3", "4")])).is_ok());
    }

    #[test]
    fn missing_answer_on_path_is_an_error() {
        let s = dim_survey(&[
            ("o1", "openness", Polarity::Positive),
            ("o2", "openness", Polarity::Positive),
        ]);
        assert!(matches!(
            score_survey(&s, &answers(&[("o1", "4")])),
            Err(OnboardingError::MissingAnswer { item, .. }) if item == "o2"
        ));
    }

    #[test]
    fn validation_catches_bad_surveys() {
        let mut s = dim_survey(&[("o1", "openness", Polarity::Positive)]);
        s.items.push(likert("o1"));
        assert!(s.validate().is_err());

        let s = IntakeSurvey {
            survey_id: "loop".into(),
            version: String::new(),
            items: vec![likert("a"), likert("b")],
            routing: vec![Route {
                from: "b".into(),
                answer: "1".into(),
                goto: "a".into(),
            }],
            scoring: ScoringRule::None,
        };
        assert!(s.validate().is_err());

        let s = IntakeSurvey {
            survey_id: "unreachable".into(),
            version: String::new(),
            items: vec![choice("a", &["x"]), likert("b"), likert("c")],
            routing: vec![Route {
                from: "a".into(),
                answer: "x".into(),
                goto: "c".into(),
            }],
            scoring: ScoringRule::None,
        };
        assert!(s.validate().is_err());
    }

    #[test]
    fn parses_toml_definition() {
        let s = IntakeSurvey::from_toml(
            r#"
            survey_id = "mini"
            [[item]]
            id = "q1"
            question = "Do you play games?"
            kind = "single_choice"
            options = [{ id = "yes", text = "Yes" }, { id = "no", text = "No" }]
            [[item]]
            id = "q2"
            question = "I am the life of the party."
            kind = "likert_1_5"
            [[routing]]
            from = "q1"
            answer = "no"
            goto = "end"
            [scoring]
            kind = "dimension_mean"
            [[scoring.dimension]]
            item = "q2"
            dimension = "extraversion"
            polarity = "+"
            "#,
        )
        .unwrap();
        assert_eq!(s.items.len(), 2);
        assert_eq!(s.routed_path(&answers(&[("q1", "no")])), vec!["q1"]);
    }
}
