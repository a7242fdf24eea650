use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numerics::{RealMatrix, SeededRng};

/// Where a named tensor lives in the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorInfo {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    entries: Vec<TensorInfo>,
    fan_in: Vec<usize>,
    total: usize,
}

impl Layout {
    pub fn entries(&self) -> &[TensorInfo] {
        &self.entries
    }

    /// Total number of scalar parameters.
    pub fn total(&self) -> usize {
        self.total
    }

    pub fn get(&self, name: &str) -> Option<&TensorInfo> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub(crate) fn same_tensors(&self, entries: &[TensorInfo]) -> bool {
        self.entries == entries
    }
}

/// Handle to a tensor inside a parameter (or gradient) slice.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Tensor {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Tensor {
    pub fn of<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.offset..self.offset + self.rows * self.cols]
    }

    pub fn of_mut<'a>(&self, p: &'a mut [f64]) -> &'a mut [f64] {
        &mut p[self.offset..self.offset + self.rows * self.cols]
    }

    pub fn row<'a>(&self, p: &'a [f64], r: usize) -> &'a [f64] {
        let start = self.offset + r * self.cols;
        &p[start..start + self.cols]
    }

    pub fn row_mut<'a>(&self, p: &'a mut [f64], r: usize) -> &'a mut [f64] {
        let start = self.offset + r * self.cols;
        &mut p[start..start + self.cols]
    }
}

#[derive(Default)]
pub(crate) struct LayoutBuilder {
    entries: Vec<TensorInfo>,
    fan_in: Vec<usize>,
    total: usize,
}

impl LayoutBuilder {
    /// Registers a tensor initialized uniformly in `±1/sqrt(fan_in)`.
    pub fn add(&mut self, name: String, rows: usize, cols: usize, fan_in: usize) -> Tensor {
        let t = Tensor { offset: self.total, rows, cols };
        self.entries.push(TensorInfo { name, offset: self.total, rows, cols });
        self.fan_in.push(fan_in.max(1));
        self.total += rows * cols;
        t
    }

    pub fn finish(self) -> Layout {
        Layout { entries: self.entries, fan_in: self.fan_in, total: self.total }
    }
}

/// Flat parameter vector plus the layout naming its pieces.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameters {
    layout: Layout,
    values: Vec<f64>,
}

impl Parameters {
    pub fn zeros(layout: Layout) -> Self {
        let values = vec![0.0; layout.total];
        Self { layout, values }
    }

    /// Every tensor uniform in `±1/sqrt(fan_in)`, drawn in layout order.
    pub fn init(layout: Layout, rng: &mut SeededRng) -> Self {
        let mut values = Vec::with_capacity(layout.total);
        for (e, &fan_in) in layout.entries.iter().zip(&layout.fan_in) {
            let r = 1.0 / (fan_in as f64).sqrt();
            values.extend((0..e.len()).map(|_| rng.uniform(-r, r)));
        }
        Self { layout, values }
    }

    pub fn from_values(layout: Layout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.total {
            return Err(Error::Shape(format!(
                "layout needs {} parameters, got {}",
                layout.total,
                values.len()
            )));
        }
        Ok(Self { layout, values })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn tensor(&self, name: &str) -> Option<RealMatrix> {
        let e = self.layout.get(name)?;
        let data = self.values[e.offset..e.offset + e.len()].to_vec();
        RealMatrix::from_vec(e.rows, e.cols, data).ok()
    }

    pub fn set_tensor(&mut self, name: &str, m: &RealMatrix) -> Result<()> {
        let e = self.layout.get(name).ok_or_else(|| Error::Config(format!("no tensor named {name}")))?;
        if (e.rows, e.cols) != (m.rows(), m.cols()) {
            return Err(Error::Shape(format!(
                "tensor {name} is {}x{}, got {}x{}",
                e.rows,
                e.cols,
                m.rows(),
                m.cols()
            )));
        }
        let (offset, len) = (e.offset, e.len());
        self.values[offset..offset + len].copy_from_slice(m.data());
        Ok(())
    }

    /// Named view of every tensor.
    pub fn to_named(&self) -> BTreeMap<String, RealMatrix> {
        self.layout
            .entries
            .iter()
            .map(|e| (e.name.clone(), self.tensor(&e.name).expect("entry exists")))
            .collect()
    }

    /// Inverse of [`Parameters::to_named`]; every tensor must be present.
    pub fn from_named(layout: Layout, named: &BTreeMap<String, RealMatrix>) -> Result<Self> {
        let mut p = Self::zeros(layout);
        if named.len() != p.layout.entries.len() {
            return Err(Error::Shape(format!(
                "expected {} tensors, got {}",
                p.layout.entries.len(),
                named.len()
            )));
        }
        let names: Vec<String> = p.layout.entries.iter().map(|e| e.name.clone()).collect();
        for name in names {
            let m = named.get(&name).ok_or_else(|| Error::Config(format!("missing tensor {name}")))?;
            p.set_tensor(&name, m)?;
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> Layout {
        let mut b = LayoutBuilder::default();
        b.add("a.w".into(), 2, 3, 3);
        b.add("a.b".into(), 1, 2, 3);
        b.add("e".into(), 4, 1, 1);
        b.finish()
    }

    #[test]
    fn named_round_trip() {
        let p = Parameters::init(layout(), &mut SeededRng::new(1));
        assert_eq!(p.len(), 12);
        let back = Parameters::from_named(layout(), &p.to_named()).unwrap();
        assert_eq!(back, p);
        assert_eq!(p.tensor("a.b").unwrap().data(), &p.values()[6..8]);
    }

    #[test]
    fn init_respects_fan_in() {
        let p = Parameters::init(layout(), &mut SeededRng::new(2));
        let r = 1.0 / 3f64.sqrt();
        assert!(p.values()[..8].iter().all(|v| v.abs() <= r));
        assert!(p.values()[8..].iter().all(|v| v.abs() <= 1.0));
    }
}
