//! Training sequences: drumless-mix tokens, one delimiter, drum tokens; plus the rhythm grid.

use serde::{Deserialize, Serialize};
use tapgroove::RhythmTrack;

use crate::codec::{CODEC_VOCAB, FRAME_RATE};
use crate::config::ModelConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub context_tokens: Vec<u32>,
    pub delimiter: u32,
    pub target_tokens: Vec<u32>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.context_tokens.len() + 1 + self.target_tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of the delimiter.
    pub fn delimiter_position(&self) -> usize {
        self.context_tokens.len()
    }

    pub fn tokens(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.len());
        out.extend_from_slice(&self.context_tokens);
        out.push(self.delimiter);
        out.extend_from_slice(&self.target_tokens);
        out
    }

    pub fn loss_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.len()];
        mask[self.context_tokens.len() + 1..].iter_mut().for_each(|m| *m = true);
        mask
    }
}

/// `K × n_frames` multi-hot event indicators, one column per sequence position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RhythmConditionGrid {
    n_classes: usize,
    n_frames: usize,
    values: Vec<u8>,
}

impl RhythmConditionGrid {
    pub fn zeros(n_classes: usize, n_frames: usize) -> Self {
        Self {
            n_classes,
            n_frames,
            values: vec![0; n_classes * n_frames],
        }
    }

    /// Marks every event of `rhythm` at frame `offset + round(onset · 50)`; events falling at or
    /// beyond `offset + region_len` are dropped.
    pub fn from_track(
        rhythm: &RhythmTrack,
        n_classes: usize,
        n_frames: usize,
        offset: usize,
        region_len: usize,
    ) -> Result<Self> {
        let mut grid = Self::zeros(n_classes, n_frames);
        for e in rhythm.events() {
            if e.class_index >= n_classes {
                return Err(Error::Shape(format!(
                    "event class {} but the grid has {n_classes} classes",
                    e.class_index
                )));
            }
            let frame = (e.onset_sec * FRAME_RATE).round() as usize;
            if frame < region_len && offset + frame < n_frames {
                grid.values[e.class_index * n_frames + offset + frame] = 1;
            }
        }
        Ok(grid)
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn get(&self, class: usize, frame: usize) -> u8 {
        self.values[class * self.n_frames + frame]
    }

    pub fn set(&mut self, class: usize, frame: usize, value: bool) {
        self.values[class * self.n_frames + frame] = value as u8;
    }

    /// Column `frame`, or zeros past the end.
    pub fn column(&self, frame: usize) -> Vec<u8> {
        (0..self.n_classes)
            .map(|c| if frame < self.n_frames { self.get(c, frame) } else { 0 })
            .collect()
    }

    pub fn is_all_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0)
    }
}

pub(crate) fn check_codec_tokens(tokens: &[u32]) -> Result<()> {
    match tokens.iter().enumerate().find(|(_, &t)| t >= CODEC_VOCAB) {
        Some((position, &token)) => Err(Error::InvalidToken { token, position }),
        None => Ok(()),
    }
}

pub fn build_sequence(
    mix_tokens: &[u32],
    drum_tokens: &[u32],
    rhythm: &RhythmTrack,
    config: &ModelConfig,
) -> Result<(TokenSequence, RhythmConditionGrid)> {
    check_codec_tokens(mix_tokens)?;
    check_codec_tokens(drum_tokens)?;
    let len = mix_tokens.len() + 1 + drum_tokens.len();
    if len > config.max_seq_len {
        return Err(Error::SequenceTooLong {
            len,
            max: config.max_seq_len,
        });
    }
    let seq = TokenSequence {
        context_tokens: mix_tokens.to_vec(),
        delimiter: config.delimiter(),
        target_tokens: drum_tokens.to_vec(),
    };
    let grid = RhythmConditionGrid::from_track(
        rhythm,
        config.rhythm_classes,
        len,
        mix_tokens.len() + 1,
        drum_tokens.len(),
    )?;
    Ok((seq, grid))
}
