//! Kinematic tree of rigid limbs with a sensor at every limb tip.
//!
//! Each limb extends along its body-frame `+y` axis from base (the joint
//! with its parent) to tip (the sensor). Sensor frame and limb frame are the
//! same frame.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rotmath::Vec3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChainError {
    #[error("chain has no limbs")]
    Empty,
    #[error("duplicate limb id {0}")]
    DuplicateId(usize),
    #[error("limb ids must be dense 0..{n}, found id {id}")]
    SparseIds { id: usize, n: usize },
    #[error("multiple roots: limbs {0} and {1} both have no parent")]
    MultipleRoots(usize, usize),
    #[error("no root limb")]
    NoRoot,
    #[error("limb {id} refers to unknown parent {parent}")]
    UnknownParent { id: usize, parent: usize },
    #[error("cycle through limb {0}")]
    Cycle(usize),
    #[error("limb {id} has non-positive or non-finite length {length}")]
    BadLength { id: usize, length: f64 },
    #[error("unknown limb id {0}")]
    UnknownId(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimbNode {
    pub id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<usize>,
    /// Base-to-tip length in meters.
    pub length: f64,
}

impl LimbNode {
    pub fn root(id: usize, length: f64) -> Self {
        LimbNode {
            id,
            parent: None,
            length,
        }
    }

    pub fn child(id: usize, parent: usize, length: f64) -> Self {
        LimbNode {
            id,
            parent: Some(parent),
            length,
        }
    }

    /// Tip position in the limb's own frame.
    pub fn tip_offset(&self) -> Vec3 {
        Vec3::new(0.0, self.length, 0.0)
    }
}

/// A validated kinematic tree. Limbs are indexed by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<LimbNode>", into = "Vec<LimbNode>")]
pub struct ChainSpec {
    limbs: Vec<LimbNode>,
    order: Vec<usize>,
    children: Vec<Vec<usize>>,
}

impl TryFrom<Vec<LimbNode>> for ChainSpec {
    type Error = ChainError;
    fn try_from(limbs: Vec<LimbNode>) -> Result<Self, ChainError> {
        validate(limbs)
    }
}

impl From<ChainSpec> for Vec<LimbNode> {
    fn from(c: ChainSpec) -> Self {
        c.limbs
    }
}

/// Checks the tree invariants and computes the depth-first traversal.
///
/// Limbs may be given in any order; the result stores them by id.
/// Children are visited in ascending id order.
pub fn validate(limbs: Vec<LimbNode>) -> Result<ChainSpec, ChainError> {
    let n = limbs.len();
    if n == 0 {
        return Err(ChainError::Empty);
    }
    let mut slots: Vec<Option<LimbNode>> = vec![None; n];
    for limb in &limbs {
        if limb.id >= n {
            return Err(ChainError::SparseIds { id: limb.id, n });
        }
        if slots[limb.id].is_some() {
            return Err(ChainError::DuplicateId(limb.id));
        }
        if !(limb.length > 0.0 && limb.length.is_finite()) {
            return Err(ChainError::BadLength {
                id: limb.id,
                length: limb.length,
            });
        }
        slots[limb.id] = Some(*limb);
    }
    let limbs: Vec<LimbNode> = slots.into_iter().map(|s| s.expect("dense ids")).collect();

    let mut root = None;
    let mut children = vec![Vec::new(); n];
    for limb in &limbs {
        match limb.parent {
            None => match root {
                None => root = Some(limb.id),
                Some(r) => return Err(ChainError::MultipleRoots(r, limb.id)),
            },
            Some(p) if p >= n => {
                return Err(ChainError::UnknownParent {
                    id: limb.id,
                    parent: p,
                })
            }
            Some(p) if p == limb.id => return Err(ChainError::Cycle(limb.id)),
            Some(p) => children[p].push(limb.id),
        }
    }
    let root = root.ok_or(ChainError::NoRoot)?;

    let mut order = Vec::with_capacity(n);
    let mut stack = vec![root];
    while let Some(id) = stack.pop() {
        order.push(id);
        stack.extend(children[id].iter().rev());
    }
    if order.len() != n {
        // anything not reachable from the root sits on a cycle
        let mut seen = vec![false; n];
        for &id in &order {
            seen[id] = true;
        }
        let stranded = (0..n).find(|&i| !seen[i]).unwrap_or(0);
        return Err(ChainError::Cycle(stranded));
    }

    Ok(ChainSpec {
        limbs,
        order,
        children,
    })
}

impl ChainSpec {
    /// Serial chain `0 → 1 → … → n-1` with the given lengths.
    pub fn serial(lengths: &[f64]) -> Result<Self, ChainError> {
        validate(
            lengths
                .iter()
                .enumerate()
                .map(|(i, &l)| LimbNode {
                    id: i,
                    parent: i.checked_sub(1),
                    length: l,
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.limbs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.limbs.is_empty()
    }

    pub fn limbs(&self) -> &[LimbNode] {
        &self.limbs
    }

    pub fn limb(&self, id: usize) -> Result<&LimbNode, ChainError> {
        self.limbs.get(id).ok_or(ChainError::UnknownId(id))
    }

    pub fn root(&self) -> usize {
        self.order[0]
    }

    pub fn parent_of(&self, id: usize) -> Result<Option<usize>, ChainError> {
        Ok(self.limb(id)?.parent)
    }

    /// Depth-first order from the root; parents precede descendants.
    pub fn traversal_order(&self) -> &[usize] {
        &self.order
    }

    pub fn children_of(&self, id: usize) -> Result<&[usize], ChainError> {
        self.children
            .get(id)
            .map(|c| c.as_slice())
            .ok_or(ChainError::UnknownId(id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_limb_is_valid() {
        let c = validate(vec![LimbNode::root(0, 0.5)]).unwrap();
        assert_eq!(c.traversal_order(), &[0]);
        assert_eq!(c.children_of(0).unwrap(), &[] as &[usize]);
    }

    #[test]
    fn boom_traversal() {
        let c = ChainSpec::serial(&[0.5, 0.5]).unwrap();
        assert_eq!(c.traversal_order(), &[0, 1]);
        assert_eq!(c.children_of(0).unwrap(), &[1]);
        assert!(c.children_of(1).unwrap().is_empty());
        assert_eq!(c.parent_of(1).unwrap(), Some(0));
    }

    #[test]
    fn two_roots_rejected() {
        let e = validate(vec![LimbNode::root(0, 0.5), LimbNode::root(1, 0.5)]).unwrap_err();
        assert_eq!(e, ChainError::MultipleRoots(0, 1));
    }

    #[test]
    fn structural_errors() {
        assert_eq!(validate(vec![]).unwrap_err(), ChainError::Empty);
        assert_eq!(
            validate(vec![LimbNode::root(0, 0.0)]).unwrap_err(),
            ChainError::BadLength { id: 0, length: 0.0 }
        );
        assert!(matches!(
            validate(vec![LimbNode::root(0, f64::NAN)]).unwrap_err(),
            ChainError::BadLength { .. }
        ));
        assert_eq!(
            validate(vec![LimbNode::root(0, 1.0), LimbNode::root(0, 1.0)]).unwrap_err(),
            ChainError::DuplicateId(0)
        );
        assert_eq!(
            validate(vec![LimbNode::root(0, 1.0), LimbNode::child(5, 0, 1.0)]).unwrap_err(),
            ChainError::SparseIds { id: 5, n: 2 }
        );
        assert_eq!(
            validate(vec![LimbNode::root(0, 1.0), LimbNode::child(1, 7, 1.0)]).unwrap_err(),
            ChainError::UnknownParent { id: 1, parent: 7 }
        );
        // 1 and 2 point at each other, detached from the root
        assert!(matches!(
            validate(vec![
                LimbNode::root(0, 1.0),
                LimbNode::child(1, 2, 1.0),
                LimbNode::child(2, 1, 1.0),
            ])
            .unwrap_err(),
            ChainError::Cycle(_)
        ));
        // all limbs in a loop: there is no root at all
        assert_eq!(
            validate(vec![LimbNode::child(0, 1, 1.0), LimbNode::child(1, 0, 1.0)]).unwrap_err(),
            ChainError::NoRoot
        );
        let c = ChainSpec::serial(&[1.0]).unwrap();
        assert_eq!(c.children_of(3).unwrap_err(), ChainError::UnknownId(3));
    }

    #[test]
    fn order_independent_input() {
        let c = validate(vec![
            LimbNode::child(2, 0, 0.3),
            LimbNode::child(1, 0, 0.3),
            LimbNode::root(0, 0.4),
        ])
        .unwrap();
        assert_eq!(c.traversal_order(), &[0, 1, 2]);
        assert_eq!(c.limb(2).unwrap().length, 0.3);
    }

    #[test]
    fn serde_validates() {
        let json = r#"[{"id":0,"length":0.5},{"id":1,"parent":0,"length":0.5}]"#;
        let c: ChainSpec = serde_json::from_str(json).unwrap();
        assert_eq!(c.len(), 2);
        let bad = r#"[{"id":0,"length":0.5},{"id":1,"length":0.5}]"#;
        assert!(serde_json::from_str::<ChainSpec>(bad).is_err());
    }
}
