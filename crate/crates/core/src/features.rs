//! FAST/SLOW labeling and feature encoding for the speed classifier.
//!
//! A feature vector holds hour of day, RSSI, device model, AP model and the
//! encryption flag. Device and AP models are mapped to dense integer codes by
//! a [`CategoryEncoder`]; code 0 stands for any category outside the
//! vocabulary.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::log_schema::{ConnectionAttempt, Outcome};

/// Successful attempts slower than this are SLOW.
pub const DEFAULT_THRESHOLD_MS: u32 = 15_000;

/// Code of every category outside an encoder's vocabulary.
pub const UNSEEN_CODE: u32 = 0;

/// Default minimum number of occurrences for a category to get its own code.
pub const DEFAULT_FREQUENCY_FLOOR: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SpeedLabel {
    Fast,
    Slow,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeatureError {
    #[error("outcome {0} is not a willing outcome and has no speed label")]
    NotWilling(Outcome),
}

/// Label from an outcome and its time: success within `threshold_ms`
/// (inclusive) is FAST, slower success and willing failures are SLOW.
pub fn label_outcome(
    outcome: Outcome,
    time_ms: Option<u32>,
    threshold_ms: u32,
) -> Result<SpeedLabel, FeatureError> {
    if !outcome.is_willing() {
        return Err(FeatureError::NotWilling(outcome));
    }
    Ok(match (outcome, time_ms) {
        (Outcome::Success, Some(t)) if t <= threshold_ms => SpeedLabel::Fast,
        _ => SpeedLabel::Slow,
    })
}

pub fn label(a: &ConnectionAttempt, threshold_ms: u32) -> Result<SpeedLabel, FeatureError> {
    label_outcome(a.outcome, a.connection_time_ms, threshold_ms)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureVector {
    pub hour_of_day: u8,
    pub rssi_dbm: i32,
    pub device_model: u32,
    pub ap_model: u32,
    pub encrypted: bool,
}

impl FeatureVector {
    pub const N_FEATURES: usize = 5;
    pub const NAMES: [&'static str; 5] = [
        "hour_of_day",
        "rssi_dbm",
        "device_model",
        "ap_model",
        "encrypted",
    ];

    /// Feature `i` as an integer, in [`FeatureVector::NAMES`] order.
    #[inline]
    pub fn get(&self, i: usize) -> i64 {
        match i {
            0 => self.hour_of_day as i64,
            1 => self.rssi_dbm as i64,
            2 => self.device_model as i64,
            3 => self.ap_model as i64,
            4 => self.encrypted as i64,
            _ => panic!("feature index {i} out of range"),
        }
    }

    pub fn is_categorical(i: usize) -> bool {
        matches!(i, 2 | 3)
    }
}

/// Category → dense code. Vocabulary codes start at 1 in sorted category order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CategoryEncoder {
    vocab: BTreeMap<String, u32>,
}

impl CategoryEncoder {
    /// Builds the vocabulary from observed values; categories seen fewer than
    /// `floor` times stay unseen. Returns the encoder and how many distinct
    /// categories were collapsed.
    pub fn fit<'a>(values: impl IntoIterator<Item = &'a str>, floor: usize) -> (Self, usize) {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for v in values {
            *counts.entry(v).or_default() += 1;
        }
        let collapsed = counts.values().filter(|&&c| c < floor).count();
        let vocab = counts
            .into_iter()
            .filter(|&(_, c)| c >= floor)
            .enumerate()
            .map(|(i, (s, _))| (s.to_string(), i as u32 + 1))
            .collect();
        (CategoryEncoder { vocab }, collapsed)
    }

    pub fn from_categories<S: Into<String>>(categories: impl IntoIterator<Item = S>) -> Self {
        let mut sorted: Vec<String> = categories.into_iter().map(Into::into).collect();
        sorted.sort();
        sorted.dedup();
        CategoryEncoder {
            vocab: sorted
                .into_iter()
                .enumerate()
                .map(|(i, s)| (s, i as u32 + 1))
                .collect(),
        }
    }

    pub fn code(&self, category: &str) -> Option<u32> {
        self.vocab.get(category).copied()
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    /// Vocabulary in code order.
    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.vocab.keys().map(String::as_str)
    }

    /// `u32` count, then per category a `u32` byte length and UTF-8 bytes.
    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_u32::<LittleEndian>(self.vocab.len() as u32)?;
        for s in self.vocab.keys() {
            w.write_u32::<LittleEndian>(s.len() as u32)?;
            w.write_all(s.as_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> io::Result<Self> {
        let n = r.read_u32::<LittleEndian>()? as usize;
        let mut cats = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let len = r.read_u32::<LittleEndian>()? as usize;
            let mut buf = vec![0; len.min(1 << 20)];
            if len > buf.len() {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    "category name too long",
                ));
            }
            r.read_exact(&mut buf)?;
            cats.push(
                String::from_utf8(buf)
                    .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?,
            );
        }
        if cats.windows(2).any(|w| w[0] >= w[1]) {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                "vocabulary not strictly sorted",
            ));
        }
        Ok(CategoryEncoder::from_categories(cats))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Encoders {
    pub device: CategoryEncoder,
    pub ap: CategoryEncoder,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabStats {
    pub device_vocab: usize,
    pub ap_vocab: usize,
    pub device_collapsed: usize,
    pub ap_collapsed: usize,
}

/// Encodings that fell back to [`UNSEEN_CODE`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnseenCounts {
    pub device: u64,
    pub ap: u64,
}

impl Encoders {
    /// Fits both vocabularies from `(device_model, ap_model)` pairs.
    pub fn fit<'a>(
        pairs: impl IntoIterator<Item = (&'a str, &'a str)> + Clone,
        floor: usize,
    ) -> (Self, VocabStats) {
        let (device, device_collapsed) =
            CategoryEncoder::fit(pairs.clone().into_iter().map(|p| p.0), floor);
        let (ap, ap_collapsed) = CategoryEncoder::fit(pairs.into_iter().map(|p| p.1), floor);
        let stats = VocabStats {
            device_vocab: device.len(),
            ap_vocab: ap.len(),
            device_collapsed,
            ap_collapsed,
        };
        (Encoders { device, ap }, stats)
    }

    pub fn encode_fields(
        &self,
        hour_of_day: u8,
        rssi_dbm: i32,
        device_model: &str,
        ap_model: &str,
        encrypted: bool,
        unseen: &mut UnseenCounts,
    ) -> FeatureVector {
        let device = self.device.code(device_model).unwrap_or_else(|| {
            unseen.device += 1;
            UNSEEN_CODE
        });
        let ap = self.ap.code(ap_model).unwrap_or_else(|| {
            unseen.ap += 1;
            UNSEEN_CODE
        });
        FeatureVector {
            hour_of_day,
            rssi_dbm,
            device_model: device,
            ap_model: ap,
            encrypted,
        }
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        self.device.write_to(w)?;
        self.ap.write_to(w)
    }

    pub fn read_from<R: Read>(r: &mut R) -> io::Result<Self> {
        let device = CategoryEncoder::read_from(r)?;
        let ap = CategoryEncoder::read_from(r)?;
        Ok(Encoders { device, ap })
    }
}

pub fn fit_encoders(corpus: &[ConnectionAttempt], floor: usize) -> (Encoders, VocabStats) {
    Encoders::fit(
        corpus
            .iter()
            .map(|a| (a.device_model.as_str(), a.ap_model.as_str())),
        floor,
    )
}

pub fn encode(a: &ConnectionAttempt, enc: &Encoders, unseen: &mut UnseenCounts) -> FeatureVector {
    enc.encode_fields(
        a.hour_of_day,
        a.rssi_dbm,
        &a.device_model,
        &a.ap_model,
        a.encrypted,
        unseen,
    )
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingSet {
    pub x: Vec<FeatureVector>,
    pub y: Vec<SpeedLabel>,
    /// Non-willing attempts left out.
    pub skipped: usize,
    pub unseen: UnseenCounts,
}

/// Encodes and labels every willing attempt of `corpus`.
pub fn training_set(
    corpus: &[ConnectionAttempt],
    enc: &Encoders,
    threshold_ms: u32,
) -> TrainingSet {
    let mut set = TrainingSet::default();
    for a in corpus {
        match label(a, threshold_ms) {
            Ok(l) => {
                set.x.push(encode(a, enc, &mut set.unseen));
                set.y.push(l);
            }
            Err(_) => set.skipped += 1,
        }
    }
    set
}
