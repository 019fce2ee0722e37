use crate::numerics::Tensor;
use crate::{Error, Result};

/// `n` samples of identical shape stored contiguously, channel-major for
/// images (`C×H×W`).
#[derive(Debug, Clone, PartialEq)]
pub struct DataBatch {
    sample_shape: Vec<usize>,
    data: Vec<f32>,
}

impl DataBatch {
    pub fn new(sample_shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let features: usize = sample_shape.iter().product();
        if sample_shape.is_empty() || features == 0 {
            return Err(Error::Dimension(format!("invalid sample shape {sample_shape:?}")));
        }
        if !data.len().is_multiple_of(features) {
            return Err(Error::Dimension(format!(
                "{} values are not a whole number of {features}-feature samples",
                data.len()
            )));
        }
        Ok(Self { sample_shape, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Dimension("rows have differing lengths".into()));
        }
        Self::new(vec![d], rows.iter().flatten().map(|&v| v as f32).collect())
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.features()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.sample_shape
    }

    /// Flattened per-sample dimension.
    pub fn features(&self) -> usize {
        self.sample_shape.iter().product()
    }

    pub fn is_image(&self) -> bool {
        self.sample_shape.len() == 3
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let f = self.features();
        &self.data[i * f..(i + 1) * f]
    }

    pub fn samples(&self) -> impl ExactSizeIterator<Item = &[f32]> {
        self.data.chunks_exact(self.features())
    }

    pub fn select(&self, indices: &[usize]) -> DataBatch {
        let mut data = Vec::with_capacity(indices.len() * self.features());
        for &i in indices {
            data.extend_from_slice(self.sample(i));
        }
        DataBatch { sample_shape: self.sample_shape.clone(), data }
    }

    /// Contiguous sub-range of samples.
    pub fn slice(&self, start: usize, end: usize) -> DataBatch {
        let f = self.features();
        DataBatch { sample_shape: self.sample_shape.clone(), data: self.data[start * f..end * f].to_vec() }
    }

    pub fn concat(&self, other: &DataBatch) -> Result<DataBatch> {
        if self.sample_shape != other.sample_shape {
            return Err(Error::Dimension(format!(
                "cannot concatenate {:?} and {:?} samples",
                self.sample_shape, other.sample_shape
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(DataBatch { sample_shape: self.sample_shape.clone(), data })
    }

    /// `[n, sample_shape…]` in 64-bit.
    pub fn to_tensor(&self) -> Tensor<f64> {
        let mut shape = vec![self.len()];
        shape.extend_from_slice(&self.sample_shape);
        Tensor::new(shape, self.data.iter().map(|&v| v as f64).collect()).expect("consistent batch")
    }

    pub fn in_unit_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }

    /// Rounds every value to the nearest `k/255`, clamped to `[0, 1]`, as
    /// an 8-bit image container would store it.
    pub fn quantize_bytes(&self) -> DataBatch {
        let data = self.data.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0).collect();
        DataBatch { sample_shape: self.sample_shape.clone(), data }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantized_batches_encode_as_idx() {
        let b = DataBatch::new(vec![1, 1, 3], vec![0.1234, 1.3, -0.2]).unwrap();
        let q = b.quantize_bytes();
        assert_eq!(q.data(), &[31.0 / 255.0, 1.0, 0.0]);
        assert!(crate::data::encode_idx(&q).is_ok());
        assert!(crate::data::encode_idx(&b).is_err());
    }

    #[test]
    fn indexing_and_selection() {
        let b = DataBatch::new(vec![2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(b.len(), 3);
        assert_eq!(b.sample(1), &[3.0, 4.0]);
        assert_eq!(b.select(&[2, 0]).data(), &[5.0, 6.0, 1.0, 2.0]);
        assert_eq!(b.slice(1, 3).len(), 2);
        assert_eq!(b.to_tensor().shape(), &[3, 2]);
    }

    #[test]
    fn rejects_ragged_data() {
        assert!(DataBatch::new(vec![3], vec![0.0; 7]).is_err());
        assert!(DataBatch::new(vec![], vec![]).is_err());
    }
}
