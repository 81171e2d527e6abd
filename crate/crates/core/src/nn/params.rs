use std::collections::HashMap;

use ndarray::{ArrayD, IxDyn, Zip};
use sha2::{Digest, Sha256};

use crate::error::{A3dError, Result};
use crate::real::Real;

/// Handle into a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone)]
pub struct Param<T> {
    pub name: String,
    pub value: ArrayD<T>,
    /// Whether weight decay applies (conv/fc weights yes, norm affine and biases no).
    pub decay: bool,
}

/// Flat, named parameter storage. Every network keeps exactly one store;
/// sub-networks read prefix slices of it, so there are no per-configuration copies.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
    index: HashMap<String, usize>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: ArrayD<T>, decay: bool) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        let id = self.params.len();
        self.index.insert(name.clone(), id);
        self.params.push(Param { name, value, decay });
        ParamId(id)
    }

    pub fn get(&self, id: ParamId) -> &ArrayD<T> {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut ArrayD<T> {
        &mut self.params[id.0].value
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn num_elements(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Same names and shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: ArrayD::zeros(p.value.raw_dim()),
                    decay: p.decay,
                })
                .collect(),
            index: self.index.clone(),
        }
    }

    pub fn fill_zero(&mut self) {
        for p in &mut self.params {
            p.value.fill(T::zero());
        }
    }

    /// `self += other`, elementwise over all parameters.
    pub fn add_assign(&mut self, other: &ParamStore<T>) {
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            Zip::from(&mut a.value).and(&b.value).for_each(|x, &y| *x += y);
        }
    }

    /// Overwrites values by name from `other`; shapes must agree.
    pub fn load_from(&mut self, other: &ParamStore<T>) -> Result<()> {
        if other.len() != self.len() {
            return Err(A3dError::Format(format!(
                "parameter count mismatch: expected {}, found {}",
                self.len(),
                other.len()
            )));
        }
        for p in &mut self.params {
            let id = other.find(&p.name).ok_or_else(|| {
                A3dError::Format(format!("missing parameter '{}'", p.name))
            })?;
            let src = other.get(id);
            if src.shape() != p.value.shape() {
                return Err(A3dError::Format(format!(
                    "shape mismatch for '{}': {:?} vs {:?}",
                    p.name,
                    src.shape(),
                    p.value.shape()
                )));
            }
            p.value.assign(src);
        }
        Ok(())
    }

    /// SHA-256 over names, shapes and little-endian values.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        let mut buf = Vec::new();
        for p in &self.params {
            h.update(p.name.as_bytes());
            for d in p.value.shape() {
                h.update((*d as u64).to_le_bytes());
            }
            buf.clear();
            for &v in p.value.iter() {
                v.write_le(&mut buf);
            }
            h.update(&buf);
        }
        format!("{:x}", h.finalize())
    }

    /// Converts every array to another element type.
    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.mapv(|v| U::of(v.f64())),
                    decay: p.decay,
                })
                .collect(),
            index: self.index.clone(),
        }
    }

    pub fn zeros(shape: &[usize]) -> ArrayD<T> {
        ArrayD::zeros(IxDyn(shape))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checksum_tracks_values() {
        let mut s = ParamStore::<f32>::new();
        let id = s.add("w", ArrayD::zeros(IxDyn(&[2, 3])), true);
        let before = s.checksum();
        assert_eq!(before, s.clone().checksum());
        s.get_mut(id)[[0, 1]] = 1.0;
        assert_ne!(before, s.checksum());
    }

    #[test]
    fn load_from_checks_shapes() {
        let mut a = ParamStore::<f32>::new();
        a.add("w", ArrayD::zeros(IxDyn(&[2])), true);
        let mut b = ParamStore::<f32>::new();
        b.add("w", ArrayD::zeros(IxDyn(&[3])), true);
        assert!(a.load_from(&b).is_err());
    }
}
