//! Flat parameter storage with a named layer partition.
//!
//! All model parameters live in one contiguous `Vec<f64>`. A
//! [`LayerPartition`] names contiguous segments of that vector ("layers");
//! per-layer operations (GSNR normalization, trust-ratio updates) address
//! parameters through it. Gradients, GSNR fields and optimizer moments are
//! plain `&[f64]`/`Vec<f64>` views of the same shape.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One named, contiguous run of parameters inside the flat vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSegment {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

impl LayerSegment {
    pub fn new(name: impl Into<String>, offset: usize, len: usize) -> Self {
        LayerSegment {
            name: name.into(),
            offset,
            len,
        }
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// Ordered layer layout over `[0, total_len)`.
///
/// Segments must be non-empty, non-overlapping, contiguous from offset 0,
/// and uniquely named; construction rejects anything else.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerPartition {
    segments: Vec<LayerSegment>,
    total: usize,
}

impl LayerPartition {
    /// Validates an explicit segment list. Offsets must start at 0 and each
    /// segment must begin exactly where the previous one ends.
    pub fn from_segments(segments: Vec<LayerSegment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::structure("partition has no segments"));
        }
        let mut expected_offset = 0usize;
        for seg in &segments {
            if seg.len == 0 {
                return Err(Error::structure(format!(
                    "layer '{}' has zero length",
                    seg.name
                )));
            }
            if seg.offset != expected_offset {
                return Err(Error::structure(format!(
                    "layer '{}' starts at offset {} but {} expected (gap or overlap)",
                    seg.name, seg.offset, expected_offset
                )));
            }
            expected_offset = seg.offset + seg.len;
        }
        for (i, seg) in segments.iter().enumerate() {
            if segments[..i].iter().any(|s| s.name == seg.name) {
                return Err(Error::structure(format!(
                    "duplicate layer name '{}'",
                    seg.name
                )));
            }
        }
        Ok(LayerPartition {
            total: expected_offset,
            segments,
        })
    }

    /// Builds a partition from `(name, len)` pairs, deriving offsets.
    pub fn from_layer_sizes<S, I>(sizes: I) -> Result<Self>
    where
        S: Into<String>,
        I: IntoIterator<Item = (S, usize)>,
    {
        let mut segments = Vec::new();
        let mut offset = 0usize;
        for (name, len) in sizes {
            segments.push(LayerSegment::new(name.into(), offset, len));
            offset += len;
        }
        Self::from_segments(segments)
    }

    /// Single-layer partition covering `len` parameters.
    pub fn single(name: impl Into<String>, len: usize) -> Result<Self> {
        Self::from_layer_sizes([(name.into(), len)])
    }

    pub fn segments(&self) -> &[LayerSegment] {
        &self.segments
    }

    pub fn total_len(&self) -> usize {
        self.total
    }

    pub fn layer_count(&self) -> usize {
        self.segments.len()
    }

    /// Name of the layer containing the parameter at `index`.
    pub fn layer_of(&self, index: usize) -> Option<&str> {
        self.segments
            .iter()
            .find(|s| s.range().contains(&index))
            .map(|s| s.name.as_str())
    }
}

/// Splits a flat vector into per-layer slices according to `partition`.
///
/// Fails when the vector length does not match the partition's total.
pub fn layer_slices<'a>(
    values: &'a [f64],
    partition: &'a LayerPartition,
) -> Result<impl Iterator<Item = (&'a str, &'a [f64])>> {
    if values.len() != partition.total_len() {
        return Err(Error::structure(format!(
            "vector length {} does not match partition total {}",
            values.len(),
            partition.total_len()
        )));
    }
    Ok(partition
        .segments()
        .iter()
        .map(move |seg| (seg.name.as_str(), &values[seg.range()])))
}

/// Returns a numeric error naming the layer of the first non-finite entry,
/// if any. `context` describes what was being computed.
pub fn check_finite(values: &[f64], partition: &LayerPartition, context: &str) -> Result<()> {
    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() {
            let layer = partition.layer_of(i).unwrap_or("<unknown>").to_string();
            return Err(Error::numeric(
                layer,
                format!("{context} produced non-finite value {v} at index {i}"),
            ));
        }
    }
    Ok(())
}

/// Initialization rule for a fresh parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    Zeros,
    Constant(f64),
    /// Independent draws from the uniform distribution on `[-bound, bound]`,
    /// reproducible from `seed`.
    Uniform { seed: u64, bound: f64 },
}

/// Flat parameter vector paired with its layer partition.
///
/// Every successful construction or update leaves all values finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    partition: LayerPartition,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, partition: LayerPartition) -> Result<Self> {
        if values.len() != partition.total_len() {
            return Err(Error::structure(format!(
                "value count {} does not match partition total {}",
                values.len(),
                partition.total_len()
            )));
        }
        check_finite(&values, &partition, "parameter construction")?;
        Ok(ParamVector { values, partition })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access for optimizer updates; callers must keep values
    /// finite (updates re-check and report the offending layer).
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn partition(&self) -> &LayerPartition {
        &self.partition
    }

    /// Splits the borrow so updates can walk values while reading layer
    /// boundaries.
    pub(crate) fn parts_mut(&mut self) -> (&mut [f64], &LayerPartition) {
        (&mut self.values, &self.partition)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Per-layer read-only slices.
    pub fn layers(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.partition
            .segments()
            .iter()
            .map(move |seg| (seg.name.as_str(), &self.values[seg.range()]))
    }
}

/// Allocates and initializes a parameter vector for `partition`.
pub fn make_params(partition: LayerPartition, init: &InitSpec) -> Result<ParamVector> {
    let n = partition.total_len();
    let values = match init {
        InitSpec::Zeros => vec![0.0; n],
        InitSpec::Constant(c) => {
            if !c.is_finite() {
                return Err(Error::config(format!("non-finite constant init {c}")));
            }
            vec![*c; n]
        }
        InitSpec::Uniform { seed, bound } => {
            if !bound.is_finite() || *bound < 0.0 {
                return Err(Error::config(format!(
                    "uniform init bound must be finite and non-negative, got {bound}"
                )));
            }
            if *bound == 0.0 {
                vec![0.0; n]
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                (0..n).map(|_| rng.random_range(-bound..=*bound)).collect()
            }
        }
    };
    ParamVector::new(values, partition)
}
