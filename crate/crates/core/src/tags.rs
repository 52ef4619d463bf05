//! BIO encoding of argument spans over the flattened dialogue.

use crate::corpus::{ArgumentSpan, Conversation, Frame, Span};
use crate::error::{CsrlError, Result};

/// Label id of `O`.
pub const OUTSIDE: usize = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tag {
    Outside,
    Begin(usize),
    Inside(usize),
}

/// `O` followed by `B-role`, `I-role` for each role in inventory order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSet {
    roles: Vec<String>,
    names: Vec<String>,
}

impl LabelSet {
    pub fn new(roles: &[String]) -> Self {
        let mut names = vec!["O".to_string()];
        for r in roles {
            names.push(format!("B-{r}"));
            names.push(format!("I-{r}"));
        }
        LabelSet {
            roles: roles.to_vec(),
            names,
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn roles(&self) -> &[String] {
        &self.roles
    }

    pub fn role_index(&self, role: &str) -> Option<usize> {
        self.roles.iter().position(|r| r == role)
    }

    pub fn begin(&self, role: usize) -> usize {
        1 + 2 * role
    }

    pub fn inside(&self, role: usize) -> usize {
        2 + 2 * role
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn tag(&self, id: usize) -> Tag {
        match id {
            OUTSIDE => Tag::Outside,
            i if i % 2 == 1 => Tag::Begin((i - 1) / 2),
            i => Tag::Inside((i - 2) / 2),
        }
    }
}

/// One label id per flattened token.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TagSequence {
    pub labels: Vec<usize>,
}

impl TagSequence {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn names<'a>(&self, set: &'a LabelSet) -> Vec<&'a str> {
        self.labels.iter().map(|&l| set.name(l)).collect()
    }
}

pub fn derive_tags(conv: &Conversation, frame: &Frame, labels: &LabelSet) -> Result<TagSequence> {
    let offsets = conv.offsets();
    let mut out = vec![OUTSIDE; conv.num_tokens()];
    for arg in &frame.arguments {
        let role = labels
            .role_index(&arg.role)
            .ok_or_else(|| CsrlError::Validation {
                id: conv.id.clone(),
                field: "role",
                message: format!("{:?} not in label inventory", arg.role),
            })?;
        let base = offsets[arg.utt_index];
        out[base + arg.span.start] = labels.begin(role);
        for t in arg.span.start + 1..arg.span.end {
            out[base + t] = labels.inside(role);
        }
    }
    Ok(TagSequence { labels: out })
}

/// Rewrites every `I-X` that does not continue a `B-X`/`I-X` run of the same
/// utterance into `B-X`. Well-formed sequences are returned unchanged.
pub fn repair(tags: &TagSequence, conv: &Conversation, labels: &LabelSet) -> TagSequence {
    let utt = conv.utterance_of_tokens();
    let mut out = tags.labels.clone();
    for t in 0..out.len() {
        if let Tag::Inside(role) = labels.tag(out[t]) {
            let continues = t > 0
                && utt[t - 1] == utt[t]
                && matches!(labels.tag(out[t - 1]), Tag::Begin(r) | Tag::Inside(r) if r == role);
            if !continues {
                out[t] = labels.begin(role);
            }
        }
    }
    TagSequence { labels: out }
}

/// Decodes spans after [`repair`]. Spans never cross utterance boundaries and
/// are returned in document order.
pub fn bio_to_spans(
    tags: &TagSequence,
    conv: &Conversation,
    labels: &LabelSet,
) -> Vec<ArgumentSpan> {
    let fixed = repair(tags, conv, labels);
    let mut spans = Vec::new();
    let mut flat = 0;
    for u in &conv.utterances {
        let mut open: Option<(usize, usize)> = None;
        for off in 0..u.tokens.len() {
            let tag = labels.tag(fixed.labels[flat + off]);
            match tag {
                Tag::Inside(_) => {}
                Tag::Outside | Tag::Begin(_) => {
                    if let Some((role, start)) = open.take() {
                        spans.push(ArgumentSpan {
                            utt_index: u.index,
                            span: Span::new(start, off),
                            role: labels.roles()[role].clone(),
                        });
                    }
                    if let Tag::Begin(role) = tag {
                        open = Some((role, off));
                    }
                }
            }
        }
        if let Some((role, start)) = open {
            spans.push(ArgumentSpan {
                utt_index: u.index,
                span: Span::new(start, u.tokens.len()),
                role: labels.roles()[role].clone(),
            });
        }
        flat += u.tokens.len();
    }
    spans
}
