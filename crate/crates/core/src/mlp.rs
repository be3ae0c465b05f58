//! The learned Hamiltonian surrogate: a 6-layer perceptron
//! `2N -> 64 -> 64 -> 64 -> 64 -> 64 -> 1` with logistic sigmoid after every
//! layer except the last.
//!
//! Three evaluation paths share the same parameters:
//! - fast scalar forward / input gradient (used inside prediction rollouts),
//! - batched forward / input gradient over many inputs at once (used by the
//!   N-body pairwise assembly),
//! - tape-recorded forward and input gradient ([`TapeMlp`]), whose backward
//!   pass is itself made of tape operations so parameter gradients of any
//!   downstream scalar can be taken in one reverse sweep.

use crate::provider::HamiltonianProvider;
use crate::tape::{sigmoid_scalar, NodeId, Tape, Tensor};
use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const HIDDEN_SIZE: usize = 64;
pub const NUM_LAYERS: usize = 6;

/// Weights and biases of the surrogate, layer by layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParameters {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// The standard layer-size chain for an input of `2N` coordinates.
pub fn layer_sizes(input_dim: usize) -> Vec<usize> {
    let mut sizes = vec![input_dim];
    sizes.extend(std::iter::repeat(HIDDEN_SIZE).take(NUM_LAYERS - 1));
    sizes.push(1);
    sizes
}

impl MlpParameters {
    /// Glorot-uniform initialization: weights drawn from
    /// `U(-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out)))`, biases zero.
    pub fn init_xavier(sizes: &[usize], seed: u64) -> Self {
        assert!(sizes.len() >= 2, "need at least one layer");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut m = Array2::zeros((fan_out, fan_in));
            for e in m.iter_mut() {
                *e = rng.gen_range(-bound..=bound);
            }
            weights.push(m);
            biases.push(Array1::zeros(fan_out));
        }
        Self { weights, biases }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in sizes.windows(2) {
            weights.push(Array2::zeros((w[1], w[0])));
            biases.push(Array1::zeros(w[1]));
        }
        Self { weights, biases }
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].ncols()
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.weights.iter().map(|w| w.nrows()));
        sizes
    }

    /// Scalar `H_theta` at a concatenated `(q, p)` input.
    pub fn forward_flat(&self, input: &[f64]) -> f64 {
        assert_eq!(input.len(), self.input_dim(), "input width mismatch");
        let mut a = Array1::from(input.to_vec());
        let last = self.num_layers() - 1;
        for (k, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w.dot(&a) + b;
            if k < last {
                z.mapv_inplace(sigmoid_scalar);
            }
            a = z;
        }
        a[0]
    }

    /// Exact reverse-mode gradient of [`Self::forward_flat`] with respect to
    /// the input, as one flat vector of length `2N`.
    pub fn input_gradient_flat(&self, input: &[f64]) -> Vec<f64> {
        assert_eq!(input.len(), self.input_dim(), "input width mismatch");
        let last = self.num_layers() - 1;
        let mut a = Array1::from(input.to_vec());
        let mut activations = Vec::with_capacity(last);
        for k in 0..last {
            let mut z = self.weights[k].dot(&a) + &self.biases[k];
            z.mapv_inplace(sigmoid_scalar);
            activations.push(z.clone());
            a = z;
        }
        // d out / d a_last = last weight row
        let mut g = self.weights[last].row(0).to_owned();
        for k in (0..last).rev() {
            let act = &activations[k];
            let gpre = &g * &(act * &act.mapv(|e| 1.0 - e));
            g = self.weights[k].t().dot(&gpre);
        }
        g.to_vec()
    }

    /// Batched forward over rows of `inputs` (`B x 2N`). Returns the `B`
    /// scalar outputs.
    pub fn batched_forward(&self, inputs: &Array2<f64>) -> Array1<f64> {
        let last = self.num_layers() - 1;
        let mut a = inputs.clone();
        for k in 0..=last {
            let mut z = a.dot(&self.weights[k].t());
            z += &self.biases[k];
            if k < last {
                z.mapv_inplace(sigmoid_scalar);
            }
            a = z;
        }
        a.index_axis(Axis(1), 0).to_owned()
    }

    /// Batched values and input gradients: returns `(B outputs, B x 2N
    /// gradients)` in one pass of matrix products.
    pub fn batched_input_gradient(&self, inputs: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
        let last = self.num_layers() - 1;
        let mut a = inputs.clone();
        let mut activations = Vec::with_capacity(last);
        for k in 0..last {
            let mut z = a.dot(&self.weights[k].t());
            z += &self.biases[k];
            z.mapv_inplace(sigmoid_scalar);
            activations.push(z.clone());
            a = z;
        }
        let mut out = a.dot(&self.weights[last].t());
        out += &self.biases[last];
        let values = out.index_axis(Axis(1), 0).to_owned();

        let batch = inputs.nrows();
        let mut g = Array2::zeros((batch, HIDDEN_SIZE));
        g += &self.weights[last].row(0);
        for k in (0..last).rev() {
            let act = &activations[k];
            let gpre = &g * &(act * &act.mapv(|e| 1.0 - e));
            g = gpre.dot(&self.weights[k]);
        }
        (values, g)
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Read one parameter by flat index (weights of each layer first, then
    /// its bias, layer by layer). Used by finite-difference probes.
    pub fn get_flat(&self, mut idx: usize) -> f64 {
        for (w, b) in self.weights.iter().zip(&self.biases) {
            if idx < w.len() {
                return w.as_slice().unwrap()[idx];
            }
            idx -= w.len();
            if idx < b.len() {
                return b[idx];
            }
            idx -= b.len();
        }
        panic!("flat index out of range");
    }

    /// Write one parameter by flat index.
    pub fn set_flat(&mut self, mut idx: usize, value: f64) {
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            if idx < w.len() {
                w.as_slice_mut().unwrap()[idx] = value;
                return;
            }
            idx -= w.len();
            if idx < b.len() {
                b[idx] = value;
                return;
            }
            idx -= b.len();
        }
        panic!("flat index out of range");
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|e| e.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|e| e.is_finite()))
    }
}

impl HamiltonianProvider for MlpParameters {
    fn dim(&self) -> usize {
        self.input_dim() / 2
    }

    fn value(&self, q: &[f64], p: &[f64]) -> f64 {
        let mut input = Vec::with_capacity(q.len() + p.len());
        input.extend_from_slice(q);
        input.extend_from_slice(p);
        self.forward_flat(&input)
    }

    fn gradient(&self, q: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = q.len();
        let mut input = Vec::with_capacity(2 * n);
        input.extend_from_slice(q);
        input.extend_from_slice(p);
        let g = self.input_gradient_flat(&input);
        (g[..n].to_vec(), g[n..].to_vec())
    }
}

/// Gradient (or any cotangent) with the same structure as [`MlpParameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradient {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl MlpGradient {
    pub fn zeros_like(params: &MlpParameters) -> Self {
        Self {
            weights: params.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            biases: params.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
        }
    }

    pub fn get_flat(&self, mut idx: usize) -> f64 {
        for (w, b) in self.weights.iter().zip(&self.biases) {
            if idx < w.len() {
                return w.as_slice().unwrap()[idx];
            }
            idx -= w.len();
            if idx < b.len() {
                return b[idx];
            }
            idx -= b.len();
        }
        panic!("flat index out of range");
    }

    pub fn scale(&mut self, c: f64) {
        for w in &mut self.weights {
            w.mapv_inplace(|e| c * e);
        }
        for b in &mut self.biases {
            b.mapv_inplace(|e| c * e);
        }
    }
}

/// The surrogate's parameters inserted as leaves on one tape.
pub struct TapeMlp {
    pub weight_nodes: Vec<NodeId>,
    pub bias_nodes: Vec<NodeId>,
    ones_scalar: NodeId,
}

impl TapeMlp {
    pub fn insert(tape: &mut Tape, params: &MlpParameters) -> Self {
        let weight_nodes = params
            .weights
            .iter()
            .map(|w| tape.leaf_matrix(w.clone()))
            .collect();
        let bias_nodes = params
            .biases
            .iter()
            .map(|b| tape.leaf_vector(b.clone()))
            .collect();
        let ones_scalar = tape.leaf_vector(Array1::from_elem(1, 1.0));
        Self {
            weight_nodes,
            bias_nodes,
            ones_scalar,
        }
    }

    /// Record the forward pass; returns the scalar output node.
    pub fn forward(&self, tape: &mut Tape, input: NodeId) -> NodeId {
        let last = self.weight_nodes.len() - 1;
        let mut a = input;
        for k in 0..=last {
            let z = tape.matvec(self.weight_nodes[k], a);
            let zb = tape.add(z, self.bias_nodes[k]);
            a = if k < last { tape.sigmoid(zb) } else { zb };
        }
        a
    }

    /// Record forward plus an explicit backward pass as tape operations;
    /// returns the input-gradient node (length `2N`). Because the backward
    /// pass is itself recorded, a later reverse sweep differentiates through
    /// it, which yields the mixed second derivatives unrolled training needs.
    pub fn input_gradient(&self, tape: &mut Tape, input: NodeId) -> NodeId {
        let last = self.weight_nodes.len() - 1;
        let mut a = input;
        let mut activations = Vec::with_capacity(last);
        for k in 0..last {
            let z = tape.matvec(self.weight_nodes[k], a);
            let zb = tape.add(z, self.bias_nodes[k]);
            let act = tape.sigmoid(zb);
            activations.push(act);
            a = act;
        }
        let mut g = tape.mat_t_vec(self.weight_nodes[last], self.ones_scalar);
        for k in (0..last).rev() {
            let act = activations[k];
            let om = tape.one_minus(act);
            let sprime = tape.mul(act, om);
            let gpre = tape.mul(g, sprime);
            g = tape.mat_t_vec(self.weight_nodes[k], gpre);
        }
        g
    }

    /// Accumulate this tape's parameter adjoints into `grad`.
    pub fn accumulate_gradient(&self, adjoints: &[Option<Tensor>], grad: &mut MlpGradient) {
        for (k, &node) in self.weight_nodes.iter().enumerate() {
            if let Some(Tensor::Matrix(m)) = &adjoints[node] {
                grad.weights[k] += m;
            }
        }
        for (k, &node) in self.bias_nodes.iter().enumerate() {
            if let Some(Tensor::Vector(v)) = &adjoints[node] {
                grad.biases[k] += v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{central_difference, rel_error};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn xavier_is_deterministic_and_bounded() {
        let sizes = layer_sizes(2);
        let a = MlpParameters::init_xavier(&sizes, 123);
        let b = MlpParameters::init_xavier(&sizes, 123);
        assert_eq!(a, b);
        let bound = (6.0 / 66.0_f64).sqrt();
        assert!(a.weights[0].iter().all(|&e| e.abs() <= bound));
        assert!(a.biases.iter().all(|b| b.iter().all(|&e| e == 0.0)));
        let c = MlpParameters::init_xavier(&sizes, 124);
        assert_ne!(a, c);
    }

    #[test]
    fn zero_last_layer_means_zero_output_and_gradient() {
        let mut params = MlpParameters::init_xavier(&layer_sizes(2), 5);
        params.weights[5].fill(0.0);
        params.biases[5].fill(0.0);
        for input in [[0.0, 0.0], [1.5, -2.0], [100.0, 3.0]] {
            assert_eq!(params.forward_flat(&input), 0.0);
            assert!(params
                .input_gradient_flat(&input)
                .iter()
                .all(|&g| g == 0.0));
        }
    }

    #[test]
    fn hidden_unit_permutation_leaves_output_unchanged() {
        let mut params = MlpParameters::init_xavier(&layer_sizes(2), 9);
        let input = [0.4, -0.8];
        let before = params.forward_flat(&input);
        // swap hidden units 3 and 17 of layer 2
        let (i, j, k) = (3, 17, 2);
        for c in 0..params.weights[k].ncols() {
            params.weights[k].swap([i, c], [j, c]);
        }
        params.biases[k].swap(i, j);
        for r in 0..params.weights[k + 1].nrows() {
            params.weights[k + 1].swap([r, i], [r, j]);
        }
        let after = params.forward_flat(&input);
        assert!((before - after).abs() < 1e-14);
    }

    #[test]
    fn output_finite_for_large_inputs() {
        let params = MlpParameters::init_xavier(&layer_sizes(2), 11);
        for &v in &[-1e3, -10.0, 0.0, 10.0, 1e3] {
            for &w in &[-1e3, 0.0, 1e3] {
                assert!(params.forward_flat(&[v, w]).is_finite());
            }
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for trial in 0..100 {
            let n = if trial % 2 == 0 { 1 } else { 2 };
            let params = MlpParameters::init_xavier(&layer_sizes(2 * n), 1000 + trial);
            let input: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let grad = params.input_gradient_flat(&input);
            for i in 0..2 * n {
                let fd = central_difference(
                    |v| {
                        let mut inp = input.clone();
                        inp[i] = v;
                        params.forward_flat(&inp)
                    },
                    input[i],
                    1e-5,
                );
                assert!(
                    rel_error(grad[i], fd) <= 1e-6 || (grad[i] - fd).abs() < 1e-9,
                    "trial {trial} coord {i}: ad {} vs fd {fd}",
                    grad[i]
                );
            }
        }
    }

    #[test]
    fn gradient_calls_are_bit_deterministic() {
        let params = MlpParameters::init_xavier(&layer_sizes(4), 3);
        let input = [0.1, -0.2, 0.3, -0.4];
        let a = params.input_gradient_flat(&input);
        let b = params.input_gradient_flat(&input);
        assert_eq!(a, b);
    }

    #[test]
    fn batched_paths_agree_with_scalar_paths() {
        let params = MlpParameters::init_xavier(&layer_sizes(2), 21);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let batch = 17;
        let mut inputs = Array2::zeros((batch, 2));
        for e in inputs.iter_mut() {
            *e = rng.gen_range(-2.0..2.0);
        }
        let (values, grads) = params.batched_input_gradient(&inputs);
        let values2 = params.batched_forward(&inputs);
        for r in 0..batch {
            let row: Vec<f64> = inputs.row(r).to_vec();
            let v = params.forward_flat(&row);
            assert!((values[r] - v).abs() < 1e-12);
            assert!((values2[r] - v).abs() < 1e-12);
            let g = params.input_gradient_flat(&row);
            for c in 0..2 {
                assert!((grads[[r, c]] - g[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tape_paths_agree_with_fast_paths() {
        let params = MlpParameters::init_xavier(&layer_sizes(4), 31);
        let input = vec![0.3, -0.6, 0.9, 0.05];
        let mut tape = Tape::new();
        let net = TapeMlp::insert(&mut tape, &params);
        let inp = tape.leaf_vector(Array1::from(input.clone()));
        let out = net.forward(&mut tape, inp);
        let grad_node = net.input_gradient(&mut tape, inp);
        assert!((tape.scalar(out) - params.forward_flat(&input)).abs() < 1e-14);
        let g_tape = tape.value(grad_node).vector();
        let g_fast = params.input_gradient_flat(&input);
        for i in 0..4 {
            assert!((g_tape[i] - g_fast[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn second_derivative_through_input_gradient_matches_fd() {
        // d/dtheta of (u . dH/dinput) against finite differences in theta
        let n = 1;
        let params = MlpParameters::init_xavier(&layer_sizes(2 * n), 55);
        let input = vec![0.7, -0.4];
        let u = Array1::from(vec![0.3, -1.1]);

        let eval = |p: &MlpParameters| -> f64 {
            let g = p.input_gradient_flat(&input);
            g.iter().zip(u.iter()).map(|(a, b)| a * b).sum()
        };

        let mut tape = Tape::new();
        let net = TapeMlp::insert(&mut tape, &params);
        let inp = tape.leaf_vector(Array1::from(input.clone()));
        let grad_node = net.input_gradient(&mut tape, inp);
        let u_node = tape.leaf_vector(u.clone());
        let prod = tape.mul(grad_node, u_node);
        let seed = tape.sum(prod);
        let adj = tape.backward(seed);
        let mut grad = MlpGradient::zeros_like(&params);
        net.accumulate_gradient(&adj, &mut grad);

        let mut rng = ChaCha8Rng::seed_from_u64(56);
        let count = params.param_count();
        for _ in 0..40 {
            let idx = rng.gen_range(0..count);
            let base = params.get_flat(idx);
            let step = 1e-5;
            let mut pp = params.clone();
            pp.set_flat(idx, base + step);
            let fp = eval(&pp);
            pp.set_flat(idx, base - step);
            let fm = eval(&pp);
            let fd = (fp - fm) / (2.0 * step);
            let ad = grad.get_flat(idx);
            assert!(
                rel_error(ad, fd) <= 1e-4 || (ad - fd).abs() < 1e-9,
                "param {idx}: ad {ad} vs fd {fd}"
            );
        }
    }
}
