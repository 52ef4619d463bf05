#![allow(dead_code)]

use csagn::corpus::{ArgumentSpan, Conversation, Dataset, Frame, Instance, Span, Utterance};
use rand::Rng;
use tensorcore::Tensor;

pub const ROLES: [&str; 3] = ["ARG0", "ARG1", "ARGM-TMP"];

pub fn roles() -> Vec<String> {
    ROLES.iter().map(|r| r.to_string()).collect()
}

/// `num_speakers` speakers; utterance lengths in `1..=max_utt_len`.
pub fn random_conversation<R: Rng>(
    rng: &mut R,
    max_utts: usize,
    max_utt_len: usize,
    num_speakers: usize,
) -> Conversation {
    let k = rng.gen_range(1..=max_utts);
    let utterances = (0..k)
        .map(|index| Utterance {
            index,
            speaker: rng.gen_range(0..num_speakers),
            tokens: (0..rng.gen_range(1..=max_utt_len))
                .map(|_| format!("w{}", rng.gen_range(0..12)))
                .collect(),
        })
        .collect();
    Conversation {
        id: format!("c{}", rng.gen::<u32>()),
        utterances,
        num_speakers,
    }
}

/// A predicate span plus random non-overlapping argument spans that avoid it.
pub fn random_frame<R: Rng>(rng: &mut R, conv: &Conversation) -> Frame {
    let predicate_utt = rng.gen_range(0..conv.len());
    let len = conv.utterances[predicate_utt].tokens.len();
    let p = rng.gen_range(0..len);
    let predicate_span = Span::new(p, p + 1);
    let mut arguments = Vec::new();
    for u in &conv.utterances {
        let mut t = 0;
        while t < u.tokens.len() {
            let is_pred = u.index == predicate_utt && t == p;
            if !is_pred && rng.gen_bool(0.3) {
                let mut end = t + 1;
                while end < u.tokens.len()
                    && !(u.index == predicate_utt && end == p)
                    && rng.gen_bool(0.4)
                {
                    end += 1;
                }
                arguments.push(ArgumentSpan {
                    utt_index: u.index,
                    span: Span::new(t, end),
                    role: ROLES[rng.gen_range(0..ROLES.len())].to_string(),
                });
                t = end;
            } else {
                t += 1;
            }
        }
    }
    Frame {
        predicate_utt,
        predicate_span,
        arguments,
    }
}

pub fn random_dataset<R: Rng>(
    rng: &mut R,
    n: usize,
    max_utts: usize,
    max_utt_len: usize,
) -> Dataset {
    Dataset {
        roles: roles(),
        instances: (0..n)
            .map(|_| {
                let conversation = random_conversation(rng, max_utts, max_utt_len, 2);
                let frame = random_frame(rng, &conversation);
                Instance {
                    conversation,
                    frame,
                }
            })
            .collect(),
    }
}

pub fn random_tensor<R: Rng>(rng: &mut R, shape: &[usize], scale: f64) -> Tensor {
    let len = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..len).map(|_| rng.gen_range(-scale..scale)).collect(),
    )
    .expect("shape matches length")
}
