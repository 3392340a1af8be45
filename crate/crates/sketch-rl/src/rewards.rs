//! Reward components and their weighted composition.
//!
//! Three channels: answer accuracy, response format, and thinking style as
//! scored by a judge. The composite is a convex combination whose weights
//! can be fixed, staged over training steps, or linearly interpolated.

use serde::{Deserialize, Serialize};

use crate::core::{AnswerKind, Question, Trace};
use crate::error::{Error, Result};
use crate::judge::Judge;

pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Coefficients of the composite reward. Each lies in [0,1] and they sum
/// to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub w_accuracy: f64,
    pub w_format: f64,
    pub w_style: f64,
}

impl RewardWeights {
    pub fn new(w_accuracy: f64, w_format: f64, w_style: f64) -> Result<Self> {
        let weights = RewardWeights {
            w_accuracy,
            w_format,
            w_style,
        };
        weights.validate()?;
        Ok(weights)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.w_accuracy, self.w_format, self.w_style];
        if parts.iter().any(|w| !w.is_finite() || *w < 0.0 || *w > 1.0) {
            return Err(Error::Config(format!("reward weights outside [0,1]: {self:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Config(format!(
                "reward weights must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            w_accuracy: 0.5,
            w_format: 0.4,
            w_style: 0.1,
        }
    }
}

/// Evolution of the reward weights over training steps.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum WeightSchedule {
    Fixed {
        weights: RewardWeights,
    },
    /// Stage weights apply while `step < bound`; past the final bound the
    /// last stage's weights stick.
    Staged {
        stages: Vec<(u64, RewardWeights)>,
    },
    /// Componentwise linear interpolation from `start` to `end` by
    /// `step / total_steps`.
    Dynamic {
        start: RewardWeights,
        end: RewardWeights,
        total_steps: u64,
    },
}

impl Default for WeightSchedule {
    fn default() -> Self {
        WeightSchedule::Fixed {
            weights: RewardWeights::default(),
        }
    }
}

impl WeightSchedule {
    /// The staged scheme with higher style weight early, tapering in two
    /// steps of 30.
    pub fn default_staged(total_steps: u64) -> Self {
        WeightSchedule::Staged {
            stages: vec![
                (30, RewardWeights::new(0.45, 0.40, 0.15).unwrap()),
                (60, RewardWeights::new(0.50, 0.40, 0.10).unwrap()),
                (total_steps.max(61), RewardWeights::new(0.55, 0.40, 0.05).unwrap()),
            ],
        }
    }

    /// The dynamic scheme: style weight 0.15 → 0.05 and accuracy 0.45 →
    /// 0.55 across the whole run, format fixed at 0.40.
    pub fn default_dynamic(total_steps: u64) -> Self {
        WeightSchedule::Dynamic {
            start: RewardWeights::new(0.45, 0.40, 0.15).unwrap(),
            end: RewardWeights::new(0.55, 0.40, 0.05).unwrap(),
            total_steps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            WeightSchedule::Fixed { weights } => weights.validate(),
            WeightSchedule::Staged { stages } => {
                if stages.is_empty() {
                    return Err(Error::Config("staged schedule with no stages".into()));
                }
                let mut prev = None;
                for (bound, weights) in stages {
                    weights.validate()?;
                    if let Some(p) = prev {
                        if *bound <= p {
                            return Err(Error::Config(
                                "staged schedule bounds must be strictly increasing".into(),
                            ));
                        }
                    }
                    prev = Some(*bound);
                }
                Ok(())
            }
            WeightSchedule::Dynamic {
                start,
                end,
                total_steps,
            } => {
                start.validate()?;
                end.validate()?;
                if *total_steps == 0 {
                    return Err(Error::Config("dynamic schedule needs total_steps > 0".into()));
                }
                Ok(())
            }
        }
    }

    /// Weights in effect at a (0-based) training step.
    pub fn weights_at(&self, step: u64) -> RewardWeights {
        match self {
            WeightSchedule::Fixed { weights } => *weights,
            WeightSchedule::Staged { stages } => stages
                .iter()
                .find(|(bound, _)| step < *bound)
                .map(|(_, w)| *w)
                .unwrap_or_else(|| stages.last().expect("validated non-empty").1),
            WeightSchedule::Dynamic {
                start,
                end,
                total_steps,
            } => {
                let t = (step.min(*total_steps) as f64) / (*total_steps as f64);
                RewardWeights {
                    w_accuracy: start.w_accuracy + t * (end.w_accuracy - start.w_accuracy),
                    w_format: start.w_format + t * (end.w_format - start.w_format),
                    w_style: start.w_style + t * (end.w_style - start.w_style),
                }
            }
        }
    }
}

/// Strip trailing punctuation, collapse whitespace, casefold.
fn normalize_answer(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_end_matches(|c: char| c.is_ascii_punctuation())
        .trim()
        .to_lowercase()
}

/// 1 iff the trace is well formed and its normalized answer matches the
/// gold answer. Malformed traces forfeit accuracy even if the answer text
/// happens to match.
pub fn accuracy_reward(trace: &Trace, question: &Question) -> f64 {
    if !trace.well_formed {
        return 0.0;
    }
    let given = normalize_answer(&trace.answer);
    let gold = normalize_answer(&question.gold_answer);
    let correct = match question.answer_kind {
        AnswerKind::MultipleChoice | AnswerKind::FreeForm => given == gold,
    };
    if correct {
        1.0
    } else {
        0.0
    }
}

/// 1 iff the trace matched the response template. Structural only.
pub fn format_reward(trace: &Trace) -> f64 {
    if trace.well_formed {
        1.0
    } else {
        0.0
    }
}

/// The judge's verdict score on the trace's thinking segment.
pub fn style_reward(trace: &Trace, judge: &dyn Judge) -> Result<f64> {
    Ok(judge.score(&trace.thinking)?.score)
}

/// Per-rollout reward components, each in [0,1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardComponents {
    pub accuracy: f64,
    pub format: f64,
    pub style: f64,
}

/// Weighted combination of the three components.
pub fn composite_reward(components: RewardComponents, weights: RewardWeights) -> f64 {
    weights.w_accuracy * components.accuracy
        + weights.w_format * components.format
        + weights.w_style * components.style
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{parse_response, FormatSpec, Tokenizer};
    use crate::judge::{RuleJudge, RuleJudgeConfig};
    use rand::{Rng, SeedableRng};

    fn question(kind: AnswerKind, gold: &str) -> Question {
        Question {
            id: "q".into(),
            context: String::new(),
            prompt: "pick".into(),
            gold_answer: gold.into(),
            answer_kind: kind,
        }
    }

    fn trace(answer: &str, well_formed: bool) -> Trace {
        Trace {
            thinking: String::new(),
            answer: answer.into(),
            raw: String::new(),
            well_formed,
        }
    }

    #[test]
    fn accuracy_exact_match() {
        let q = question(AnswerKind::MultipleChoice, "B");
        assert_eq!(accuracy_reward(&trace("B", true), &q), 1.0);
    }

    #[test]
    fn accuracy_normalizes_both_sides() {
        let q = question(AnswerKind::MultipleChoice, "B");
        assert_eq!(accuracy_reward(&trace(" b. ", true), &q), 1.0);
        let free = question(AnswerKind::FreeForm, "Pacific  Ocean");
        assert_eq!(accuracy_reward(&trace("pacific ocean!", true), &free), 1.0);
        assert_eq!(accuracy_reward(&trace("atlantic", true), &free), 0.0);
    }

    #[test]
    fn malformed_forfeits_accuracy() {
        let q = question(AnswerKind::MultipleChoice, "B");
        assert_eq!(accuracy_reward(&trace("B", false), &q), 0.0);
    }

    #[test]
    fn format_is_structural_only() {
        assert_eq!(format_reward(&trace("x", true)), 1.0);
        assert_eq!(format_reward(&trace("x", false)), 0.0);
        let parsed = parse_response("<think></think><answer>x</answer>", &FormatSpec::default());
        assert_eq!(format_reward(&parsed), 1.0);
    }

    #[test]
    fn style_reward_follows_judge() {
        let judge = RuleJudge::binary(RuleJudgeConfig::default(), Tokenizer::Whitespace);
        let sketch = Trace {
            thinking: "1. A.\n2. B.\n3. C.".into(),
            answer: "x".into(),
            raw: String::new(),
            well_formed: true,
        };
        let normal = Trace {
            thinking: "A very long paragraph that analyses the question in detail without any numbered structure at all.".into(),
            answer: "x".into(),
            raw: String::new(),
            well_formed: true,
        };
        assert_eq!(style_reward(&sketch, &judge).unwrap(), 1.0);
        assert_eq!(style_reward(&normal, &judge).unwrap(), 0.0);
    }

    #[test]
    fn composite_arithmetic() {
        let w = RewardWeights::default();
        let all = RewardComponents {
            accuracy: 1.0,
            format: 1.0,
            style: 1.0,
        };
        let no_style = RewardComponents {
            accuracy: 1.0,
            format: 1.0,
            style: 0.0,
        };
        let none = RewardComponents {
            accuracy: 0.0,
            format: 0.0,
            style: 0.0,
        };
        assert!((composite_reward(all, w) - 1.0).abs() < 1e-12);
        assert!((composite_reward(no_style, w) - 0.9).abs() < 1e-12);
        assert_eq!(composite_reward(none, w), 0.0);
    }

    #[test]
    fn composite_stays_in_unit_interval() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let a: f64 = rng.gen();
            let b: f64 = rng.gen_range(0.0..(1.0 - a));
            let w = RewardWeights::new(a, b, 1.0 - a - b).unwrap();
            let c = RewardComponents {
                accuracy: rng.gen(),
                format: rng.gen(),
                style: rng.gen(),
            };
            let r = composite_reward(c, w);
            assert!((0.0..=1.0).contains(&r));
        }
    }

    #[test]
    fn style_strictly_orders_composites_when_weighted() {
        let w = RewardWeights::default();
        let sketchy = RewardComponents {
            accuracy: 1.0,
            format: 1.0,
            style: 1.0,
        };
        let verbose = RewardComponents {
            accuracy: 1.0,
            format: 1.0,
            style: 0.0,
        };
        assert!(composite_reward(sketchy, w) > composite_reward(verbose, w));
    }

    #[test]
    fn weights_must_sum_to_one() {
        assert!(RewardWeights::new(0.5, 0.4, 0.2).is_err());
        assert!(RewardWeights::new(0.5, 0.4, 0.1).is_ok());
        assert!(RewardWeights::new(-0.1, 0.9, 0.2).is_err());
    }

    #[test]
    fn staged_schedule_lookup() {
        let schedule = WeightSchedule::default_staged(105);
        assert_eq!(
            schedule.weights_at(10),
            RewardWeights::new(0.45, 0.40, 0.15).unwrap()
        );
        assert_eq!(
            schedule.weights_at(45),
            RewardWeights::new(0.50, 0.40, 0.10).unwrap()
        );
        assert_eq!(
            schedule.weights_at(80),
            RewardWeights::new(0.55, 0.40, 0.05).unwrap()
        );
        // Beyond the final bound the last stage sticks.
        assert_eq!(
            schedule.weights_at(10_000),
            RewardWeights::new(0.55, 0.40, 0.05).unwrap()
        );
    }

    #[test]
    fn dynamic_schedule_midpoint() {
        let schedule = WeightSchedule::Dynamic {
            start: RewardWeights::new(0.45, 0.40, 0.15).unwrap(),
            end: RewardWeights::new(0.55, 0.40, 0.05).unwrap(),
            total_steps: 100,
        };
        let mid = schedule.weights_at(50);
        assert!((mid.w_accuracy - 0.50).abs() < 1e-12);
        assert!((mid.w_format - 0.40).abs() < 1e-12);
        assert!((mid.w_style - 0.10).abs() < 1e-12);
    }

    #[test]
    fn schedules_sum_to_one_at_every_step() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let rand_weights = |rng: &mut rand_chacha::ChaCha8Rng| {
                let a: f64 = rng.gen();
                let b: f64 = rng.gen_range(0.0..(1.0 - a));
                RewardWeights::new(a, b, 1.0 - a - b).unwrap()
            };
            let total = rng.gen_range(1..200u64);
            let schedule = match rng.gen_range(0..3) {
                0 => WeightSchedule::Fixed {
                    weights: rand_weights(&mut rng),
                },
                1 => {
                    let mut bound = 0;
                    let stages = (0..rng.gen_range(1..4))
                        .map(|_| {
                            bound += rng.gen_range(1..50);
                            (bound, rand_weights(&mut rng))
                        })
                        .collect();
                    WeightSchedule::Staged { stages }
                }
                _ => WeightSchedule::Dynamic {
                    start: rand_weights(&mut rng),
                    end: rand_weights(&mut rng),
                    total_steps: total,
                },
            };
            schedule.validate().unwrap();
            for step in 0..=total {
                let w = schedule.weights_at(step);
                let sum = w.w_accuracy + w.w_format + w.w_style;
                assert!((sum - 1.0).abs() < WEIGHT_SUM_TOL, "step {step}: sum {sum}");
            }
        }
    }
}
