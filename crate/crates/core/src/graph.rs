//! Reverse-mode gradient tape.
//!
//! A `Graph` records one forward pass as a linear tape of nodes. Each node
//! holds its forward value and, when gradients are enabled, a backward
//! closure that maps the node's output gradient to gradients for its
//! parents. `backward` replays the tape once in reverse insertion order
//! (a valid reverse topological order, since ops are recorded after their
//! inputs) and accumulates into fan-out parents by summation.

use crate::array::{Array, Scalar};
use crate::param::{ParamId, ParamStore};
use std::collections::HashMap;

/// Handle to a node in a `Graph`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) u32);

/// Backward closure: given the output gradient and a per-parent "is this
/// gradient needed" mask, produce gradients for each parent (None where
/// not needed or not defined).
pub type BackwardFn<T> = Box<dyn Fn(&Array<T>, &[bool]) -> Vec<Option<Array<T>>>>;

struct Node<T: Scalar> {
    value: Array<T>,
    parents: Vec<Var>,
    backward: Option<BackwardFn<T>>,
    needs_grad: bool,
    grad: Option<Array<T>>,
}

pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    grad_enabled: bool,
    param_memo: HashMap<(u64, usize), Var>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    /// Graph that records backward closures.
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), grad_enabled: true, param_memo: HashMap::new() }
    }

    /// Inference-only graph: values are computed, nothing is recorded.
    pub fn inference() -> Self {
        Graph { nodes: Vec::new(), grad_enabled: false, param_memo: HashMap::new() }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf holding data that never needs a gradient.
    pub fn constant(&mut self, value: Array<T>) -> Var {
        self.push_leaf(value, false)
    }

    /// Leaf with an explicit `requires_grad` flag.
    pub fn leaf(&mut self, value: Array<T>, requires_grad: bool) -> Var {
        self.push_leaf(value, requires_grad && self.grad_enabled)
    }

    /// Leaf for a stored parameter. Memoized: registering the same
    /// parameter twice in one graph returns the same node, so fan-out
    /// gradients accumulate correctly.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        let key = (store.store_id(), id.index());
        if let Some(&v) = self.param_memo.get(&key) {
            return v;
        }
        let entry = store.entry(id);
        let v = self.push_leaf(entry.value.clone(), entry.trainable && self.grad_enabled);
        self.param_memo.insert(key, v);
        v
    }

    fn push_leaf(&mut self, value: Array<T>, needs_grad: bool) -> Var {
        let id = Var(self.nodes.len() as u32);
        self.nodes.push(Node { value, parents: Vec::new(), backward: None, needs_grad, grad: None });
        id
    }

    /// Record an interior node. The backward closure is dropped when
    /// gradients are disabled or no parent needs one.
    pub fn push(
        &mut self,
        value: Array<T>,
        parents: Vec<Var>,
        backward: impl FnOnce() -> BackwardFn<T>,
    ) -> Var {
        let needs_grad =
            self.grad_enabled && parents.iter().any(|p| self.nodes[p.0 as usize].needs_grad);
        let id = Var(self.nodes.len() as u32);
        if needs_grad {
            self.nodes.push(Node {
                value,
                parents,
                backward: Some(backward()),
                needs_grad: true,
                grad: None,
            });
        } else {
            self.nodes.push(Node { value, parents: Vec::new(), backward: None, needs_grad: false, grad: None });
        }
        id
    }

    pub fn value(&self, v: Var) -> &Array<T> {
        &self.nodes[v.0 as usize].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0 as usize].value.shape()
    }

    /// Accumulated gradient of a node, if any flowed to it.
    pub fn grad(&self, v: Var) -> Option<&Array<T>> {
        self.nodes[v.0 as usize].grad.as_ref()
    }

    /// Gradient of a stored parameter after `backward`.
    pub fn param_grad(&self, store: &ParamStore<T>, id: ParamId) -> Option<&Array<T>> {
        self.param_memo.get(&(store.store_id(), id.index())).and_then(|&v| self.grad(v))
    }

    /// Reverse pass from a scalar loss (seeded with 1).
    pub fn backward(&mut self, loss: Var) {
        let shape = self.shape(loss).to_vec();
        assert_eq!(
            shape.iter().product::<usize>(),
            1,
            "backward() needs a scalar loss, got shape {:?}; use backward_seeded",
            shape
        );
        self.backward_seeded(loss, Array::full(&shape, T::one()));
    }

    /// Reverse pass with an explicit output gradient.
    pub fn backward_seeded(&mut self, root: Var, seed: Array<T>) {
        assert!(self.grad_enabled, "backward on an inference graph");
        assert_eq!(self.shape(root), seed.shape(), "seed shape mismatch");
        self.accumulate(root, seed);
        for i in (0..=root.0 as usize).rev() {
            if self.nodes[i].backward.is_none() || self.nodes[i].grad.is_none() {
                continue;
            }
            let grad_out = self.nodes[i].grad.clone().expect("checked above");
            let parents = self.nodes[i].parents.clone();
            let needs: Vec<bool> =
                parents.iter().map(|p| self.nodes[p.0 as usize].needs_grad).collect();
            let backward = self.nodes[i].backward.as_ref().expect("checked above");
            let parent_grads = backward(&grad_out, &needs);
            assert_eq!(parent_grads.len(), parents.len(), "backward arity mismatch at node {i}");
            for (parent, grad) in parents.into_iter().zip(parent_grads) {
                if let Some(g) = grad {
                    if self.nodes[parent.0 as usize].needs_grad {
                        self.accumulate(parent, g);
                    }
                }
            }
            // Interior gradients are not needed again: reverse insertion
            // order guarantees every consumer of node i was already
            // processed, so this node's accumulation is complete.
        }
    }

    fn accumulate(&mut self, v: Var, g: Array<T>) {
        let node = &mut self.nodes[v.0 as usize];
        debug_assert_eq!(node.value.shape(), g.shape(), "gradient shape mismatch");
        match &mut node.grad {
            Some(acc) => acc.add_assign(&g),
            None => node.grad = Some(g),
        }
    }
}
