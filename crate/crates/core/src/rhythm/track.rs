//! MIDI-like rhythm events and their CSV/JSON interchange forms.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhythmEvent {
    pub onset_sec: f64,
    pub class_index: usize,
    /// Activation peak height.
    pub salience: f64,
}

/// Events sorted by `(onset_sec, class_index)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RhythmTrack {
    duration_sec: f64,
    n_classes: usize,
    events: Vec<RhythmEvent>,
}

#[derive(Deserialize)]
struct RawTrack {
    duration_sec: f64,
    n_classes: usize,
    events: Vec<RhythmEvent>,
}

pub const CSV_HEADER: &str = "onset_sec,class_index,salience";

impl RhythmTrack {
    /// Validates and sorts `events`.
    pub fn new(mut events: Vec<RhythmEvent>, duration_sec: f64, n_classes: usize) -> Result<Self> {
        if !(duration_sec >= 0.0) || !duration_sec.is_finite() {
            return Err(Error::InvalidTrack(format!("bad duration {duration_sec}")));
        }
        if n_classes == 0 {
            return Err(Error::InvalidTrack("n_classes must be positive".into()));
        }
        for e in &events {
            if !(e.onset_sec >= 0.0) || e.onset_sec > duration_sec {
                return Err(Error::InvalidTrack(format!(
                    "onset {} outside [0, {duration_sec}]",
                    e.onset_sec
                )));
            }
            if e.class_index >= n_classes {
                return Err(Error::InvalidTrack(format!(
                    "class {} >= n_classes {n_classes}",
                    e.class_index
                )));
            }
            if !(e.salience >= 0.0) || !e.salience.is_finite() {
                return Err(Error::InvalidTrack(format!("bad salience {}", e.salience)));
            }
        }
        events.sort_by(|a, b| {
            a.onset_sec
                .total_cmp(&b.onset_sec)
                .then(a.class_index.cmp(&b.class_index))
        });
        Ok(Self {
            duration_sec,
            n_classes,
            events,
        })
    }

    pub fn empty(duration_sec: f64, n_classes: usize) -> Result<Self> {
        Self::new(Vec::new(), duration_sec, n_classes)
    }

    pub fn events(&self) -> &[RhythmEvent] {
        &self.events
    }

    pub fn duration_sec(&self) -> f64 {
        self.duration_sec
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// All onset times, ascending (simultaneous events of different classes repeat).
    pub fn onsets(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.onset_sec).collect()
    }

    pub fn class_onsets(&self, class_index: usize) -> Vec<f64> {
        self.events
            .iter()
            .filter(|e| e.class_index == class_index)
            .map(|e| e.onset_sec)
            .collect()
    }

    /// Events with onset in `[0, seconds]`, duration clipped to `seconds`.
    pub fn truncated(&self, seconds: f64) -> RhythmTrack {
        let duration_sec = self.duration_sec.min(seconds);
        RhythmTrack {
            duration_sec,
            n_classes: self.n_classes,
            events: self
                .events
                .iter()
                .filter(|e| e.onset_sec <= duration_sec)
                .copied()
                .collect(),
        }
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for e in &self.events {
            out.push_str(&format!(
                "{:.6},{},{:.6}\n",
                e.onset_sec, e.class_index, e.salience
            ));
        }
        out
    }

    /// Parses the CSV form. The CSV carries neither duration nor class count; when not supplied
    /// they default to the last onset and `max class + 1`.
    pub fn from_csv_str(
        text: &str,
        duration_sec: Option<f64>,
        n_classes: Option<usize>,
    ) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| Error::Parse(e.to_string()))?
            .clone();
        if headers.iter().collect::<Vec<_>>() != ["onset_sec", "class_index", "salience"] {
            return Err(Error::Parse(format!("unexpected CSV header {headers:?}")));
        }
        let mut events = Vec::new();
        for record in reader.deserialize::<RhythmEvent>() {
            events.push(record.map_err(|e| Error::Parse(e.to_string()))?);
        }
        let duration = duration_sec.unwrap_or_else(|| {
            events.iter().map(|e| e.onset_sec).fold(0.0, f64::max)
        });
        let classes = n_classes.unwrap_or_else(|| {
            events.iter().map(|e| e.class_index + 1).max().unwrap_or(1)
        });
        Self::new(events, duration, classes)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("track serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawTrack = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::new(raw.events, raw.duration_sec, raw.n_classes)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }

    /// Reads either form, chosen by extension (`.json`, otherwise CSV).
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&text),
            _ => Self::from_csv_str(&text, None, None),
        }
    }
}

impl<'de> Deserialize<'de> for RhythmTrack {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawTrack::deserialize(d)?;
        RhythmTrack::new(raw.events, raw.duration_sec, raw.n_classes)
            .map_err(serde::de::Error::custom)
    }
}
