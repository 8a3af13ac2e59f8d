use std::collections::HashMap;

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{MllmError, Result};

/// Disjoint parameter partition used for freezing and hashing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Base,
    Projector,
    Lora,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 3] = [ParamGroup::Base, ParamGroup::Projector, ParamGroup::Lora];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorMeta {
    pub name: String,
    pub group: ParamGroup,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorMeta {
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

/// All parameters of a model in one contiguous buffer, addressed by a table
/// of named tensors in insertion order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    metas: Vec<TensorMeta>,
    index: HashMap<String, usize>,
    pub(crate) data: Vec<f64>,
}

impl ParamStore {
    pub fn add(&mut self, name: &str, group: ParamGroup, shape: &[usize], mut init: impl FnMut() -> f64) -> usize {
        assert!(!self.index.contains_key(name), "duplicate tensor {name}");
        let offset = self.data.len();
        let meta = TensorMeta { name: name.to_string(), group, shape: shape.to_vec(), offset };
        self.data.extend((0..meta.len()).map(|_| init()));
        self.index.insert(name.to_string(), self.metas.len());
        self.metas.push(meta);
        self.metas.len() - 1
    }

    /// Rebuilds a store from a tensor table and its values, checking that
    /// the table is contiguous and consistent.
    pub fn from_parts(metas: Vec<TensorMeta>, data: Vec<f64>) -> Result<Self> {
        let mut index = HashMap::with_capacity(metas.len());
        let mut expected = 0usize;
        for (i, m) in metas.iter().enumerate() {
            if m.offset != expected {
                return Err(MllmError::Checkpoint(format!("tensor `{}` is not contiguous", m.name)));
            }
            let len = m
                .shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| MllmError::Checkpoint(format!("tensor `{}` is too large", m.name)))?;
            expected = expected
                .checked_add(len)
                .ok_or_else(|| MllmError::Checkpoint("parameter count overflows".into()))?;
            if index.insert(m.name.clone(), i).is_some() {
                return Err(MllmError::Checkpoint(format!("duplicate tensor `{}`", m.name)));
            }
        }
        if expected != data.len() {
            return Err(MllmError::Checkpoint(format!("table covers {expected} values, buffer has {}", data.len())));
        }
        Ok(Self { metas, index, data })
    }

    pub fn metas(&self) -> &[TensorMeta] {
        &self.metas
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn id(&self, name: &str) -> Result<usize> {
        self.index.get(name).copied().ok_or_else(|| MllmError::Checkpoint(format!("missing tensor `{name}`")))
    }

    pub fn meta(&self, id: usize) -> &TensorMeta {
        &self.metas[id]
    }

    pub fn slice(&self, id: usize) -> &[f64] {
        &self.data[self.metas[id].range()]
    }

    pub fn slice_mut(&mut self, id: usize) -> &mut [f64] {
        let r = self.metas[id].range();
        &mut self.data[r]
    }

    pub fn view1(&self, id: usize) -> ArrayView1<'_, f64> {
        ArrayView1::from(self.slice(id))
    }

    pub fn view2(&self, id: usize) -> ArrayView2<'_, f64> {
        let s = &self.metas[id].shape;
        ArrayView2::from_shape((s[0], s[1]), self.slice(id)).expect("2-d tensor")
    }

    /// SHA-256 over names, shapes and little-endian values of one group.
    pub fn group_hash(&self, group: ParamGroup) -> String {
        let mut h = Sha256::new();
        for m in self.metas.iter().filter(|m| m.group == group) {
            h.update(m.name.as_bytes());
            for d in &m.shape {
                h.update((*d as u64).to_le_bytes());
            }
            for v in &self.data[m.range()] {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Copy keeping only tensors accepted by `keep`.
    pub fn filtered(&self, keep: impl Fn(&TensorMeta) -> bool) -> Self {
        let mut out = Self::default();
        for m in self.metas.iter().filter(|m| keep(m)) {
            let mut it = self.data[m.range()].iter().copied();
            out.add(&m.name, m.group, &m.shape, || it.next().unwrap_or_default());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_hash() {
        let mut s = ParamStore::default();
        let a = s.add("a", ParamGroup::Base, &[2, 3], || 1.0);
        let b = s.add("b", ParamGroup::Projector, &[4], || 2.0);
        assert_eq!(s.len(), 10);
        assert_eq!(s.view2(a).dim(), (2, 3));
        assert_eq!(s.slice(b), &[2.0; 4]);
        let h = s.group_hash(ParamGroup::Base);
        s.slice_mut(b)[0] = 5.0;
        assert_eq!(s.group_hash(ParamGroup::Base), h);
        assert_ne!(s.group_hash(ParamGroup::Projector), ParamStore::default().group_hash(ParamGroup::Projector));
        let back = ParamStore::from_parts(s.metas().to_vec(), s.data.clone()).unwrap();
        assert_eq!(back, s);
        assert!(ParamStore::from_parts(s.metas().to_vec(), vec![0.0; 3]).is_err());
        assert_eq!(s.filtered(|m| m.group == ParamGroup::Base).len(), 6);
    }
}
