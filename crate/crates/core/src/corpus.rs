//! Annotated dialogues: loading, validation, derived targets and statistics.
//!
//! Corpus files are JSON lines. An optional first line `{"roles": [...]}`
//! declares the closed role inventory; every other line is one
//! (conversation, predicate) instance:
//!
//! ```text
//! {"id": "d1", "speakers": [0, 1], "utterances": [["hi"], ["i", "watched", "it"]],
//!  "predicate": {"utt": 1, "start": 1, "end": 2},
//!  "arguments": [{"utt": 1, "start": 0, "end": 1, "role": "ARG0"}]}
//! ```
//!
//! Token offsets are half-open. Speaker ids are renumbered per conversation in
//! order of first appearance.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CsrlError, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Utterance {
    pub index: usize,
    pub speaker: usize,
    pub tokens: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Conversation {
    pub id: String,
    pub utterances: Vec<Utterance>,
    pub num_speakers: usize,
}

impl Conversation {
    pub fn num_tokens(&self) -> usize {
        self.utterances.iter().map(|u| u.tokens.len()).sum()
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Utterance index of every flattened token.
    pub fn utterance_of_tokens(&self) -> Vec<usize> {
        self.utterances
            .iter()
            .flat_map(|u| std::iter::repeat_n(u.index, u.tokens.len()))
            .collect()
    }

    /// Flat index of the first token of each utterance.
    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.utterances
            .iter()
            .map(|u| {
                let o = acc;
                acc += u.tokens.len();
                o
            })
            .collect()
    }

    pub fn speakers(&self) -> Vec<usize> {
        self.utterances.iter().map(|u| u.speaker).collect()
    }
}

/// Half-open token range inside one utterance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn contains(&self, offset: usize) -> bool {
        self.start <= offset && offset < self.end
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ArgumentSpan {
    pub utt_index: usize,
    pub span: Span,
    pub role: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub predicate_utt: usize,
    pub predicate_span: Span,
    pub arguments: Vec<ArgumentSpan>,
}

impl Frame {
    pub fn is_cross(&self, arg: &ArgumentSpan) -> bool {
        arg.utt_index != self.predicate_utt
    }
}

/// One (conversation, predicate) training or evaluation item.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    pub conversation: Conversation,
    pub frame: Frame,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Dataset {
    pub roles: Vec<String>,
    pub instances: Vec<Instance>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    fn with_instances(&self, instances: Vec<Instance>) -> Dataset {
        Dataset {
            roles: self.roles.clone(),
            instances,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UtteranceType {
    PredicateUtterance,
    ArgumentUtterance,
    IrrelevantUtterance,
}

impl UtteranceType {
    pub const COUNT: usize = 3;

    pub fn class_index(self) -> usize {
        match self {
            UtteranceType::PredicateUtterance => 0,
            UtteranceType::ArgumentUtterance => 1,
            UtteranceType::IrrelevantUtterance => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub num_dialogs: usize,
    pub num_utterances: usize,
    pub num_predicates: usize,
    pub num_arguments: usize,
    pub cross_ratio: f64,
}

// Wire format.

#[derive(Serialize, Deserialize)]
struct SpanRecord {
    utt: usize,
    start: usize,
    end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    role: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct InstanceRecord {
    id: String,
    speakers: Vec<u64>,
    utterances: Vec<Vec<String>>,
    predicate: SpanRecord,
    #[serde(default)]
    arguments: Vec<SpanRecord>,
}

#[derive(Serialize, Deserialize)]
struct HeaderRecord {
    roles: Vec<String>,
}

fn invalid(id: &str, field: &'static str, message: impl Into<String>) -> CsrlError {
    CsrlError::Validation {
        id: id.to_string(),
        field,
        message: message.into(),
    }
}

fn check_span(
    id: &str,
    field: &'static str,
    conv: &Conversation,
    rec: &SpanRecord,
) -> Result<(usize, Span)> {
    let utt = conv
        .utterances
        .get(rec.utt)
        .ok_or_else(|| invalid(id, field, format!("utterance {} out of range", rec.utt)))?;
    if rec.start >= rec.end || rec.end > utt.tokens.len() {
        return Err(invalid(
            id,
            field,
            format!(
                "span [{}, {}) invalid for utterance {} of length {}",
                rec.start,
                rec.end,
                rec.utt,
                utt.tokens.len()
            ),
        ));
    }
    Ok((rec.utt, Span::new(rec.start, rec.end)))
}

fn build_instance(rec: InstanceRecord, roles: Option<&[String]>) -> Result<Instance> {
    let id = rec.id.clone();
    if rec.utterances.is_empty() {
        return Err(invalid(&id, "utterances", "conversation has no utterances"));
    }
    if rec.speakers.len() != rec.utterances.len() {
        return Err(invalid(
            &id,
            "speakers",
            format!(
                "{} speakers for {} utterances",
                rec.speakers.len(),
                rec.utterances.len()
            ),
        ));
    }
    let mut speaker_ids: HashMap<u64, usize> = HashMap::new();
    let mut utterances = Vec::with_capacity(rec.utterances.len());
    for (index, (tokens, raw)) in rec.utterances.into_iter().zip(&rec.speakers).enumerate() {
        if tokens.is_empty() {
            return Err(invalid(
                &id,
                "utterances",
                format!("utterance {index} is empty"),
            ));
        }
        let next = speaker_ids.len();
        let speaker = *speaker_ids.entry(*raw).or_insert(next);
        utterances.push(Utterance {
            index,
            speaker,
            tokens,
        });
    }
    let conversation = Conversation {
        id: id.clone(),
        utterances,
        num_speakers: speaker_ids.len(),
    };

    let (predicate_utt, predicate_span) =
        check_span(&id, "predicate", &conversation, &rec.predicate)?;
    let mut arguments: Vec<ArgumentSpan> = Vec::with_capacity(rec.arguments.len());
    for a in &rec.arguments {
        let (utt_index, span) = check_span(&id, "arguments", &conversation, a)?;
        let role = a
            .role
            .clone()
            .ok_or_else(|| invalid(&id, "arguments", "argument without role"))?;
        if let Some(inv) = roles {
            if !inv.contains(&role) {
                return Err(invalid(
                    &id,
                    "role",
                    format!("{role:?} not in role inventory"),
                ));
            }
        }
        if utt_index == predicate_utt && span.overlaps(&predicate_span) {
            return Err(invalid(&id, "arguments", "argument overlaps the predicate"));
        }
        if arguments
            .iter()
            .any(|o| o.utt_index == utt_index && o.span.overlaps(&span))
        {
            return Err(invalid(&id, "arguments", "overlapping argument spans"));
        }
        arguments.push(ArgumentSpan {
            utt_index,
            span,
            role,
        });
    }
    Ok(Instance {
        conversation,
        frame: Frame {
            predicate_utt,
            predicate_span,
            arguments,
        },
    })
}

/// Parses a JSON-lines corpus from any reader. Blank lines are skipped.
pub fn parse_corpus<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut declared: Option<Vec<String>> = None;
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| CsrlError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
        let is_header = value.get("roles").is_some() && value.get("utterances").is_none();
        if is_header {
            if declared.is_some() || !records.is_empty() {
                return Err(CsrlError::Parse {
                    line: line_no,
                    message: "role header must be the first line".into(),
                });
            }
            let header: HeaderRecord =
                serde_json::from_value(value).map_err(|e| CsrlError::Parse {
                    line: line_no,
                    message: e.to_string(),
                })?;
            declared = Some(header.roles);
            continue;
        }
        let rec: InstanceRecord = serde_json::from_value(value).map_err(|e| CsrlError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        records.push(rec);
    }
    let mut instances = Vec::with_capacity(records.len());
    for rec in records {
        instances.push(build_instance(rec, declared.as_deref())?);
    }
    let roles = match declared {
        Some(r) => r,
        None => instances
            .iter()
            .flat_map(|i| i.frame.arguments.iter().map(|a| a.role.clone()))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    Ok(Dataset { roles, instances })
}

/// Loads and validates a corpus file; see the module docs for the format.
pub fn load_corpus(path: &Path) -> Result<Dataset> {
    let file = File::open(path)?;
    parse_corpus(BufReader::new(file))
}

/// Writes a corpus in the same format `load_corpus` reads, header first.
pub fn write_corpus<W: Write>(dataset: &Dataset, mut out: W) -> Result<()> {
    serde_json::to_writer(
        &mut out,
        &HeaderRecord {
            roles: dataset.roles.clone(),
        },
    )?;
    writeln!(out)?;
    for inst in &dataset.instances {
        let conv = &inst.conversation;
        let rec = InstanceRecord {
            id: conv.id.clone(),
            speakers: conv.utterances.iter().map(|u| u.speaker as u64).collect(),
            utterances: conv.utterances.iter().map(|u| u.tokens.clone()).collect(),
            predicate: SpanRecord {
                utt: inst.frame.predicate_utt,
                start: inst.frame.predicate_span.start,
                end: inst.frame.predicate_span.end,
                role: None,
            },
            arguments: inst
                .frame
                .arguments
                .iter()
                .map(|a| SpanRecord {
                    utt: a.utt_index,
                    start: a.span.start,
                    end: a.span.end,
                    role: Some(a.role.clone()),
                })
                .collect(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        writeln!(out)?;
    }
    Ok(())
}

/// Argument spans as JSON objects in the corpus `arguments` layout.
pub fn arguments_json(args: &[ArgumentSpan]) -> serde_json::Value {
    serde_json::Value::Array(
        args.iter()
            .map(|a| {
                serde_json::json!({
                    "utt": a.utt_index,
                    "start": a.span.start,
                    "end": a.span.end,
                    "role": a.role,
                })
            })
            .collect(),
    )
}

pub fn derive_utterance_types(conv: &Conversation, frame: &Frame) -> Vec<UtteranceType> {
    (0..conv.len())
        .map(|k| {
            if k == frame.predicate_utt {
                UtteranceType::PredicateUtterance
            } else if frame.arguments.iter().any(|a| a.utt_index == k) {
                UtteranceType::ArgumentUtterance
            } else {
                UtteranceType::IrrelevantUtterance
            }
        })
        .collect()
}

pub fn stats(dataset: &Dataset) -> Result<CorpusStats> {
    if dataset.is_empty() {
        return Err(CsrlError::EmptyDataset);
    }
    let mut dialogs: HashMap<&str, usize> = HashMap::new();
    let mut arguments = 0;
    let mut cross = 0;
    for inst in &dataset.instances {
        dialogs.insert(&inst.conversation.id, inst.conversation.len());
        arguments += inst.frame.arguments.len();
        cross += inst
            .frame
            .arguments
            .iter()
            .filter(|a| inst.frame.is_cross(a))
            .count();
    }
    Ok(CorpusStats {
        num_dialogs: dialogs.len(),
        num_utterances: dialogs.values().sum(),
        num_predicates: dataset.len(),
        num_arguments: arguments,
        cross_ratio: if arguments == 0 {
            0.0
        } else {
            cross as f64 / arguments as f64
        },
    })
}

#[derive(Clone, Debug)]
pub struct Splits {
    pub train: Dataset,
    pub dev: Dataset,
    pub test: Dataset,
}

/// Seeded dialogue-level split: every instance of a conversation id lands in
/// the same part. Part sizes are `floor(n·r)` for train and dev, rest to test.
pub fn split(dataset: &Dataset, ratios: [f64; 3], seed: u64) -> Result<Splits> {
    let valid = ratios.iter().all(|r| r.is_finite() && *r >= 0.0)
        && (ratios.iter().sum::<f64>() - 1.0).abs() < 1e-6;
    if !valid {
        return Err(CsrlError::Ratios(ratios.to_vec()));
    }
    let mut ids: Vec<&str> = Vec::new();
    for inst in &dataset.instances {
        if !ids.contains(&inst.conversation.id.as_str()) {
            ids.push(&inst.conversation.id);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let n = ids.len();
    let n_train = (n as f64 * ratios[0] + 1e-9).floor() as usize;
    let n_dev = ((n as f64 * ratios[1] + 1e-9).floor() as usize).min(n - n_train);
    let part: HashMap<&str, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let p = if i < n_train {
                0
            } else if i < n_train + n_dev {
                1
            } else {
                2
            };
            (*id, p)
        })
        .collect();
    let mut parts: [Vec<Instance>; 3] = Default::default();
    for inst in &dataset.instances {
        parts[part[inst.conversation.id.as_str()]].push(inst.clone());
    }
    let [train, dev, test] = parts;
    Ok(Splits {
        train: dataset.with_instances(train),
        dev: dataset.with_instances(dev),
        test: dataset.with_instances(test),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = r#"{"roles": ["ARG0", "ARG1"]}"#;

    fn parse(text: &str) -> Result<Dataset> {
        parse_corpus(text.as_bytes())
    }

    #[test]
    fn minimal_record() {
        let ds = parse(
            r#"{"id": "a", "speakers": [0], "utterances": [["go"]], "predicate": {"utt": 0, "start": 0, "end": 1}, "arguments": []}"#,
        )
        .unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.instances[0].conversation.len(), 1);
        assert!(ds.roles.is_empty());
    }

    #[test]
    fn argument_past_utterance_end_is_rejected() {
        let text = format!(
            "{HEADER}\n{}",
            r#"{"id": "bad", "speakers": [0], "utterances": [["a", "b"]], "predicate": {"utt": 0, "start": 0, "end": 1}, "arguments": [{"utt": 0, "start": 1, "end": 3, "role": "ARG0"}]}"#
        );
        let err = parse(&text).unwrap_err().to_string();
        assert!(err.contains("bad") && err.contains("arguments"), "{err}");
    }

    #[test]
    fn parse_errors_name_the_line() {
        let text = format!("{HEADER}\n{{not json");
        match parse(&text) {
            Err(CsrlError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn undeclared_role_is_rejected() {
        let text = format!(
            "{HEADER}\n{}",
            r#"{"id": "r", "speakers": [0], "utterances": [["a", "b"]], "predicate": {"utt": 0, "start": 0, "end": 1}, "arguments": [{"utt": 0, "start": 1, "end": 2, "role": "ARGM-TMP"}]}"#
        );
        assert!(parse(&text).unwrap_err().to_string().contains("role"));
    }

    #[test]
    fn overlap_with_predicate_is_rejected() {
        let text = r#"{"id": "o", "speakers": [0], "utterances": [["a", "b"]], "predicate": {"utt": 0, "start": 0, "end": 2}, "arguments": [{"utt": 0, "start": 1, "end": 2, "role": "ARG0"}]}"#;
        assert!(parse(text).is_err());
    }

    #[test]
    fn speakers_are_renumbered_by_first_appearance() {
        let text = r#"{"id": "s", "speakers": [7, 3, 7], "utterances": [["a"], ["b"], ["c"]], "predicate": {"utt": 2, "start": 0, "end": 1}}"#;
        let ds = parse(text).unwrap();
        let conv = &ds.instances[0].conversation;
        assert_eq!(conv.speakers(), vec![0, 1, 0]);
        assert_eq!(conv.num_speakers, 2);
    }

    fn toy(args: &[(usize, usize, usize)], pred_utt: usize, k: usize) -> Instance {
        let conversation = Conversation {
            id: "t".into(),
            utterances: (0..k)
                .map(|index| Utterance {
                    index,
                    speaker: index % 2,
                    tokens: vec!["w".into(); 4],
                })
                .collect(),
            num_speakers: 2.min(k),
        };
        Instance {
            conversation,
            frame: Frame {
                predicate_utt: pred_utt,
                predicate_span: Span::new(3, 4),
                arguments: args
                    .iter()
                    .map(|&(u, s, e)| ArgumentSpan {
                        utt_index: u,
                        span: Span::new(s, e),
                        role: "ARG0".into(),
                    })
                    .collect(),
            },
        }
    }

    #[test]
    fn utterance_types_examples() {
        use UtteranceType::*;
        let a = toy(&[(0, 0, 1)], 0, 3);
        assert_eq!(
            derive_utterance_types(&a.conversation, &a.frame),
            vec![PredicateUtterance, IrrelevantUtterance, IrrelevantUtterance]
        );
        let b = toy(&[(1, 0, 1)], 2, 3);
        assert_eq!(
            derive_utterance_types(&b.conversation, &b.frame),
            vec![IrrelevantUtterance, ArgumentUtterance, PredicateUtterance]
        );
    }

    #[test]
    fn stats_cross_ratio_examples() {
        let one = Dataset {
            roles: vec!["ARG0".into()],
            instances: vec![toy(&[(0, 0, 1)], 0, 1)],
        };
        assert_eq!(stats(&one).unwrap().cross_ratio, 0.0);
        let two = Dataset {
            roles: vec!["ARG0".into()],
            instances: vec![toy(&[(0, 0, 1), (1, 0, 2)], 0, 2)],
        };
        assert_eq!(stats(&two).unwrap().cross_ratio, 0.5);
        assert!(matches!(
            stats(&Dataset::default()),
            Err(CsrlError::EmptyDataset)
        ));
    }

    fn ten_dialogs() -> Dataset {
        Dataset {
            roles: vec!["ARG0".into()],
            instances: (0..10)
                .map(|i| {
                    let mut inst = toy(&[], 0, 1);
                    inst.conversation.id = format!("d{i}");
                    inst
                })
                .collect(),
        }
    }

    #[test]
    fn split_sizes_and_determinism() {
        let ds = ten_dialogs();
        let s = split(&ds, [0.8, 0.1, 0.1], 7).unwrap();
        assert_eq!((s.train.len(), s.dev.len(), s.test.len()), (8, 1, 1));
        let again = split(&ds, [0.8, 0.1, 0.1], 7).unwrap();
        assert_eq!(s.train, again.train);
        assert_eq!(s.test, again.test);
    }

    #[test]
    fn split_rejects_bad_ratios() {
        assert!(split(&ten_dialogs(), [0.8, 0.3, 0.1], 0).is_err());
        assert!(split(&ten_dialogs(), [1.2, -0.1, -0.1], 0).is_err());
    }

    #[test]
    fn write_then_parse_round_trips() {
        let ds = Dataset {
            roles: vec!["ARG0".into()],
            instances: vec![toy(&[(1, 0, 2)], 0, 3)],
        };
        let mut buf = Vec::new();
        write_corpus(&ds, &mut buf).unwrap();
        assert_eq!(parse_corpus(buf.as_slice()).unwrap(), ds);
    }
}
