//! Flat parameter storage with named, shaped segments.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub shape: Vec<usize>,
    #[serde(skip)]
    pub offset: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Ordered segment table shared by a parameter vector and its gradients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    segments: Vec<Segment>,
    index: HashMap<String, usize>,
    total: usize,
}

impl Layout {
    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn get(&self, name: &str) -> Option<&Segment> {
        self.index.get(name).map(|&i| &self.segments[i])
    }

    /// Name of the segment containing flat index `i`.
    pub fn segment_at(&self, i: usize) -> Option<&Segment> {
        let pos = self.segments.partition_point(|s| s.offset + s.len() <= i);
        self.segments.get(pos).filter(|s| s.range().contains(&i))
    }

    pub fn from_segments<I>(segments: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Vec<usize>)>,
    {
        let mut builder = LayoutBuilder::default();
        for (name, shape) in segments {
            builder.push(&name, &shape)?;
        }
        Ok(builder.finish())
    }
}

#[derive(Debug, Default)]
pub struct LayoutBuilder {
    segments: Vec<Segment>,
    index: HashMap<String, usize>,
    total: usize,
}

impl LayoutBuilder {
    /// Appends a segment and returns its offset in the flat vector.
    pub fn push(&mut self, name: &str, shape: &[usize]) -> Result<usize> {
        if self.index.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter segment `{name}`")));
        }
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::Config(format!(
                "segment `{name}` has degenerate shape {shape:?}"
            )));
        }
        let offset = self.total;
        let seg = Segment {
            name: name.to_string(),
            shape: shape.to_vec(),
            offset,
        };
        self.total += seg.len();
        self.index.insert(name.to_string(), self.segments.len());
        self.segments.push(seg);
        Ok(offset)
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn finish(self) -> Layout {
        Layout {
            segments: self.segments,
            index: self.index,
            total: self.total,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    layout: Arc<Layout>,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(layout: Arc<Layout>) -> Self {
        let values = vec![0.0; layout.total()];
        Self { layout, values }
    }

    pub fn from_values(layout: Arc<Layout>, values: Vec<f64>) -> Result<Self> {
        check_len("parameter vector", layout.total(), values.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            let seg = layout.segment_at(i).map(|s| s.name.as_str()).unwrap_or("?");
            return Err(Error::NonFinite(format!("parameter segment `{seg}`")));
        }
        Ok(Self { layout, values })
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        self.layout.get(name).map(|s| &self.values[s.range()])
    }

    pub fn segment_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self.layout.get(name)?.range();
        Some(&mut self.values[range])
    }
}

/// Gradient of a scalar with respect to a [`ParamVector`], optionally with
/// the gradient with respect to the network input.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientRecord {
    layout: Arc<Layout>,
    pub params: Vec<f64>,
    pub input: Option<Vec<f64>>,
}

impl GradientRecord {
    pub fn zeros(layout: Arc<Layout>) -> Self {
        let params = vec![0.0; layout.total()];
        Self {
            layout,
            params,
            input: None,
        }
    }

    pub fn from_parts(layout: Arc<Layout>, params: Vec<f64>, input: Option<Vec<f64>>) -> Result<Self> {
        check_len("gradient record", layout.total(), params.len())?;
        Ok(Self {
            layout,
            params,
            input,
        })
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        self.layout.get(name).map(|s| &self.params[s.range()])
    }

    pub fn add_assign(&mut self, other: &GradientRecord) -> Result<()> {
        check_len("gradient record", self.params.len(), other.params.len())?;
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        self.params.iter_mut().for_each(|g| *g *= factor);
    }

    pub fn norm(&self) -> f64 {
        self.params.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    /// First segment holding a non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<&str> {
        let i = self.params.iter().position(|g| !g.is_finite())?;
        Some(self.layout.segment_at(i).map(|s| s.name.as_str()).unwrap_or("?"))
    }
}
