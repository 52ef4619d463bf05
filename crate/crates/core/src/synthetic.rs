//! Seeded templated two-speaker dialogues with planted intra- and
//! cross-utterance arguments.
//!
//! Three frame kinds are planted:
//! - intra: `NAME VERB OBJ [TIME] [at LOC]`, every argument local;
//! - question: `what about OBJ ?` from one speaker answered by
//!   `yes i VERB [TIME]` from the other, `OBJ` being the ARG1;
//! - follow-up: `i VERB [TIME]` followed within four turns by `i mean OBJ`
//!   from the same speaker (the ARG1), optionally alongside an identical
//!   `i mean OBJ'` from the other speaker that is not an argument.
//!
//! Speakers are drawn at random, so only speaker identity separates a
//! follow-up argument from its distractor. Remaining turns are distractors
//! built from the same vocabulary.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{ArgumentSpan, Conversation, Dataset, Frame, Instance, Span, Utterance};

pub const ROLES: [&str; 4] = ["ARG0", "ARG1", "ARGM-TMP", "ARGM-LOC"];

const NAMES: [&str; 6] = ["tom", "anna", "li", "maria", "bob", "kate"];
const VERBS: [&str; 6] = ["likes", "watched", "visited", "bought", "read", "cooked"];
const OBJECTS: [&str; 8] = [
    "movies", "books", "paris", "tea", "music", "pizza", "football", "jazz",
];
const TIMES: [&str; 4] = ["today", "yesterday", "tomorrow", "tonight"];
const PLACES: [&str; 4] = ["home", "school", "work", "beijing"];

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub num_dialogs: usize,
    /// Utterances per dialogue are drawn from `2..=max_utterances`.
    pub max_utterances: usize,
    /// Probability that a dialogue's frame has a cross-utterance ARG1.
    pub cross_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_dialogs: 50,
            max_utterances: 6,
            cross_fraction: 0.5,
            seed: 0,
        }
    }
}

fn pick<'a, R: Rng>(rng: &mut R, words: &[&'a str]) -> &'a str {
    words.choose(rng).copied().unwrap_or_default()
}

fn words(ws: &[&str]) -> Vec<String> {
    ws.iter().map(|w| w.to_string()).collect()
}

fn distractor<R: Rng>(rng: &mut R) -> Vec<String> {
    match rng.gen_range(0..4) {
        0 => words(&["ok"]),
        1 => words(&[pick(rng, &OBJECTS), "is", "boring"]),
        2 => words(&[pick(rng, &NAMES), pick(rng, &VERBS), pick(rng, &OBJECTS)]),
        _ => words(&["i", "think", "so"]),
    }
}

fn arg(utt: usize, start: usize, role: &str) -> ArgumentSpan {
    ArgumentSpan {
        utt_index: utt,
        span: Span::new(start, start + 1),
        role: role.to_string(),
    }
}

/// Largest offset between a predicate turn and its follow-up turn.
const FOLLOW_UP_REACH: usize = 4;

fn time_suffix<R: Rng>(
    rng: &mut R,
    turn: &mut Vec<String>,
    utt: usize,
    args: &mut Vec<ArgumentSpan>,
) {
    if rng.gen_bool(0.5) {
        args.push(arg(utt, turn.len(), "ARGM-TMP"));
        turn.push(pick(rng, &TIMES).to_string());
    }
}

fn dialog<R: Rng>(rng: &mut R, cfg: &SyntheticConfig, id: String) -> Instance {
    let k = rng.gen_range(2..=cfg.max_utterances.max(2));
    let mut turns: Vec<Vec<String>> = (0..k).map(|_| distractor(rng)).collect();
    let mut speakers: Vec<usize> = (0..k).map(|_| rng.gen_range(0..2)).collect();
    let mut arguments = Vec::new();
    let (p, predicate_span) = if rng.gen_bool(cfg.cross_fraction.clamp(0.0, 1.0)) {
        if rng.gen_bool(1.0 / 3.0) {
            let p = rng.gen_range(1..k);
            speakers[p - 1] = 1 - speakers[p];
            turns[p - 1] = words(&["what", "about", pick(rng, &OBJECTS), "?"]);
            turns[p] = words(&["yes", "i", pick(rng, &VERBS)]);
            arguments.push(arg(p, 1, "ARG0"));
            arguments.push(arg(p - 1, 2, "ARG1"));
            time_suffix(rng, &mut turns[p], p, &mut arguments);
            (p, Span::new(2, 3))
        } else {
            let p = rng.gen_range(0..k - 1);
            let reach = (p + FOLLOW_UP_REACH).min(k - 1);
            let mut later: Vec<usize> = (p + 1..=reach).collect();
            later.shuffle(rng);
            let obj = pick(rng, &OBJECTS);
            turns[p] = words(&["i", pick(rng, &VERBS)]);
            arguments.push(arg(p, 0, "ARG0"));
            time_suffix(rng, &mut turns[p], p, &mut arguments);
            speakers[later[0]] = speakers[p];
            turns[later[0]] = words(&["i", "mean", obj]);
            arguments.push(arg(later[0], 2, "ARG1"));
            if let Some(&d) = later.get(1) {
                let other = OBJECTS
                    .iter()
                    .copied()
                    .filter(|o| *o != obj)
                    .collect::<Vec<_>>();
                speakers[d] = 1 - speakers[p];
                turns[d] = words(&["i", "mean", pick(rng, &other)]);
            }
            (p, Span::new(1, 2))
        }
    } else {
        let p = rng.gen_range(0..k);
        let mut stmt = words(&[pick(rng, &NAMES), pick(rng, &VERBS), pick(rng, &OBJECTS)]);
        arguments.push(arg(p, 0, "ARG0"));
        arguments.push(arg(p, 2, "ARG1"));
        time_suffix(rng, &mut stmt, p, &mut arguments);
        if rng.gen_bool(0.5) {
            stmt.push("at".to_string());
            arguments.push(arg(p, stmt.len(), "ARGM-LOC"));
            stmt.push(pick(rng, &PLACES).to_string());
        }
        turns[p] = stmt;
        (p, Span::new(1, 2))
    };
    // Speaker ids in order of first appearance, as the corpus loader stores them.
    let mut order: Vec<usize> = Vec::new();
    for &s in &speakers {
        if !order.contains(&s) {
            order.push(s);
        }
    }
    let utterances = turns
        .into_iter()
        .enumerate()
        .map(|(index, tokens)| Utterance {
            index,
            speaker: order
                .iter()
                .position(|&s| s == speakers[index])
                .unwrap_or(0),
            tokens,
        })
        .collect();
    arguments.sort_by_key(|a| (a.utt_index, a.span.start));
    Instance {
        conversation: Conversation {
            id,
            utterances,
            num_speakers: order.len(),
        },
        frame: Frame {
            predicate_utt: p,
            predicate_span,
            arguments,
        },
    }
}

/// One instance per dialogue; identical output for identical configs.
pub fn generate(cfg: &SyntheticConfig) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Dataset {
        roles: ROLES.iter().map(|r| r.to_string()).collect(),
        instances: (0..cfg.num_dialogs)
            .map(|i| dialog(&mut rng, cfg, format!("synth-{}-{i}", cfg.seed)))
            .collect(),
    }
}
