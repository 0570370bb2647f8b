use std::collections::{HashMap, HashSet};

use super::{Result, Scalar, Tensor, TensorError};

/// Gradients of a scalar loss w.r.t. every reachable leaf that requires
/// gradients, keyed by tensor identity.
pub struct Gradients<S: Scalar> {
    by_id: HashMap<u64, Tensor<S>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, leaf: &Tensor<S>) -> Option<&Tensor<S>> {
        self.by_id.get(&leaf.id())
    }

    /// Gradient w.r.t. `leaf`, or zeros when the loss does not depend on it.
    pub fn wrt(&self, leaf: &Tensor<S>) -> Result<Tensor<S>> {
        match self.get(leaf) {
            Some(g) => Ok(g.clone()),
            None => Tensor::zeros(leaf.shape()),
        }
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }
}

impl<S: Scalar> Tensor<S> {
    /// Replays the tape behind this scalar in reverse and returns the
    /// gradient of every requires-grad leaf it depends on. The recorded
    /// backward closures are consumed; a second call fails with
    /// [`TensorError::TapeConsumed`].
    pub fn backward(&self) -> Result<Gradients<S>> {
        if self.numel() != 1 {
            return Err(TensorError::NonScalarLoss(self.shape().to_vec()));
        }
        let mut leaves = HashMap::new();
        if !self.requires_grad() {
            return Ok(Gradients { by_id: leaves });
        }
        if self.is_consumed() {
            return Err(TensorError::TapeConsumed);
        }

        // Collect every node reachable through requires-grad edges.
        let mut nodes: Vec<Tensor<S>> = Vec::new();
        let mut seen = HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(t) = stack.pop() {
            if !seen.insert(t.id()) {
                continue;
            }
            if t.is_consumed() {
                return Err(TensorError::TapeConsumed);
            }
            if let Some(inputs) = t.grad_fn_inputs() {
                stack.extend(inputs.into_iter().filter(|x| x.requires_grad()));
            }
            nodes.push(t);
        }
        // Inputs are always created before outputs.
        nodes.sort_by_key(|t| std::cmp::Reverse(t.id()));

        let mut pending: HashMap<u64, Vec<S>> = HashMap::new();
        pending.insert(self.id(), vec![S::one()]);
        for node in nodes {
            let Some(grad) = pending.remove(&node.id()) else {
                continue;
            };
            match node.take_grad_fn() {
                Some(grad_fn) => {
                    node.mark_consumed();
                    let input_grads = (grad_fn.backward)(&grad)?;
                    debug_assert_eq!(input_grads.len(), grad_fn.inputs.len());
                    for (input, g) in grad_fn.inputs.iter().zip(input_grads) {
                        let Some(g) = g else { continue };
                        if !input.requires_grad() {
                            continue;
                        }
                        debug_assert_eq!(g.len(), input.numel());
                        match pending.get_mut(&input.id()) {
                            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a += b),
                            None => {
                                pending.insert(input.id(), g);
                            }
                        }
                    }
                }
                None => {
                    leaves.insert(node.id(), Tensor::new(node.shape(), grad)?);
                }
            }
        }
        Ok(Gradients { by_id: leaves })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(data: &[f64]) -> Tensor {
        Tensor::from_f64(&[data.len()], data).unwrap().requires_grad_leaf()
    }

    #[test]
    fn sum_of_squares_gradient() {
        let x = leaf(&[1.0, 2.0, 3.0]);
        let loss = x.mul(&x).unwrap().sum().unwrap();
        let g = loss.backward().unwrap();
        assert_eq!(g.wrt(&x).unwrap().to_vec(), vec![2.0, 4.0, 6.0]);
    }

    #[test]
    fn constant_loss_gives_zero_gradient() {
        let x = leaf(&[1.0, 2.0, 3.0]);
        let c = Tensor::scalar(5.0).unwrap();
        let g = c.backward().unwrap();
        assert_eq!(g.wrt(&x).unwrap().to_vec(), vec![0.0; 3]);

        let through_zero = x.scale(0.0).unwrap().sum().unwrap();
        let g = through_zero.backward().unwrap();
        assert_eq!(g.wrt(&x).unwrap().to_vec(), vec![0.0; 3]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let x = leaf(&[1.0, 2.0]);
        let y = x.scale(2.0).unwrap();
        assert!(matches!(y.backward(), Err(TensorError::NonScalarLoss(_))));
    }

    #[test]
    fn tape_is_consumed_once() {
        let x = leaf(&[1.0, 2.0]);
        let loss = x.mul(&x).unwrap().sum().unwrap();
        loss.backward().unwrap();
        assert!(matches!(loss.backward(), Err(TensorError::TapeConsumed)));
    }

    #[test]
    fn shared_subexpression_accumulates() {
        // f = sum(x*x + x) -> 2x + 1
        let x = leaf(&[0.5, -1.0]);
        let y = x.mul(&x).unwrap().add(&x).unwrap().sum().unwrap();
        let g = y.backward().unwrap();
        assert_eq!(g.wrt(&x).unwrap().to_vec(), vec![2.0, -1.0]);
    }
}
