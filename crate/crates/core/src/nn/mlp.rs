use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::tape::{Mat, Tape, Var};
use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// Fixed affine maps applied to inputs and outputs; not trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub in_shift: Vec<f64>,
    pub in_scale: Vec<f64>,
    pub out_shift: f64,
    pub out_scale: f64,
}

impl Normalization {
    pub fn identity(width: usize) -> Self {
        Normalization {
            in_shift: vec![0.0; width],
            in_scale: vec![1.0; width],
            out_shift: 0.0,
            out_scale: 1.0,
        }
    }

    /// Column means and population standard deviations of `x` (scale 1 for
    /// constant columns) and the same for `y`.
    pub fn fit(x: &Mat, y: &[f64]) -> Self {
        let stats = |col: &mut dyn Iterator<Item = f64>| {
            let v: Vec<f64> = col.collect();
            let n = v.len().max(1) as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            let sd = var.sqrt();
            (mean, if sd > 1e-12 { sd } else { 1.0 })
        };
        let (in_shift, in_scale) = (0..x.ncols())
            .map(|j| stats(&mut x.column(j).iter().copied()))
            .unzip();
        let (out_shift, out_scale) = stats(&mut y.iter().copied());
        Normalization {
            in_shift,
            in_scale,
            out_shift,
            out_scale,
        }
    }
}

/// Feed-forward regressor: ReLU hidden layers, linear scalar output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpRegressor {
    pub dims: Vec<usize>,
    /// `weights[l]` is `dims[l] x dims[l + 1]`.
    pub weights: Vec<Mat>,
    /// `biases[l]` is `1 x dims[l + 1]`.
    pub biases: Vec<Mat>,
    pub dropout_p: f64,
    pub norm: Normalization,
}

/// How a forward pass treats dropout.
#[derive(Debug, Clone, Copy)]
pub enum Mode {
    Eval,
    /// Dropout with the mask identified by `mask_id` on `stream`.
    Train { stream: RandomStream, mask_id: u64 },
}

/// Nodes of a forward pass recorded on a tape.
#[derive(Debug, Clone)]
pub struct TapeForward {
    /// Predictions, `n x 1`.
    pub y: Var,
    /// Input of the output layer, `n x k`.
    pub h: Var,
    /// Per hidden layer, ReLU derivative times dropout mask (constants).
    pub gates: Vec<Mat>,
}

/// Parameter leaves of a model bound to a tape.
#[derive(Debug, Clone)]
pub struct Bound {
    pub weights: Vec<Var>,
    pub biases: Vec<Var>,
}

impl Bound {
    /// Parameter vars in the order of [`MlpRegressor::params`].
    pub fn vars(&self) -> Vec<Var> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(&w, &b)| [w, b])
            .collect()
    }
}

pub fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims.contains(&0) || *dims.last().unwrap() != 1 {
        return Err(Error::InvalidArgument(format!(
            "layer dims {dims:?} must have >= 2 positive entries ending in 1"
        )));
    }
    Ok(())
}

/// He-initialised weights (variance `2 / fan_in`) and zero biases.
pub fn mlp_init(dims: &[usize], stream: RandomStream, dropout_p: f64) -> Result<MlpRegressor> {
    check_dims(dims)?;
    if !(0.0..1.0).contains(&dropout_p) {
        return Err(Error::InvalidArgument(format!("dropout_p {dropout_p} not in [0, 1)")));
    }
    let mut rng = stream.rng();
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for w in dims.windows(2) {
        let normal = Normal::new(0.0, (2.0 / w[0] as f64).sqrt()).expect("finite std");
        weights.push(Array2::from_shape_simple_fn((w[0], w[1]), || normal.sample(&mut rng)));
        biases.push(Mat::zeros((1, w[1])));
    }
    Ok(MlpRegressor {
        dims: dims.to_vec(),
        weights,
        biases,
        dropout_p,
        norm: Normalization::identity(dims[0]),
    })
}

impl MlpRegressor {
    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn hidden_layers(&self) -> usize {
        self.dims.len() - 2
    }

    /// Width of the representation fed to the output layer.
    pub fn repr_dim(&self) -> usize {
        self.dims[self.dims.len() - 2]
    }

    /// Parameters as `[w0, b0, w1, b1, ...]`.
    pub fn params(&self) -> Vec<&Mat> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Mat> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|m| m.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.params().into_iter().flat_map(|m| m.iter().copied()).collect()
    }

    /// Rebuilds parameters from [`to_flat`](Self::to_flat) order.
    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                got: flat.len(),
            });
        }
        let mut it = flat.iter().copied();
        for m in self.params_mut() {
            m.iter_mut().for_each(|v| *v = it.next().unwrap());
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|m| m.iter().all(|v| v.is_finite()))
    }

    /// Dropout masks for `ids.len()` rows: row `r` of every hidden layer is
    /// drawn from sub-stream `ids[r]`, entries `0` or `1 / (1 - p)`.
    pub fn dropout_masks(&self, stream: RandomStream, ids: &[u64]) -> Vec<Mat> {
        let keep = 1.0 - self.dropout_p;
        let mut masks: Vec<Mat> = self.dims[1..self.dims.len() - 1]
            .iter()
            .map(|&w| Mat::zeros((ids.len(), w)))
            .collect();
        for (r, &id) in ids.iter().enumerate() {
            let mut rng = stream.sub(id).rng();
            for m in &mut masks {
                for v in m.row_mut(r) {
                    *v = if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 };
                }
            }
        }
        masks
    }

    pub fn bind(&self, tape: &mut Tape) -> Bound {
        Bound {
            weights: self.weights.iter().map(|w| tape.var(w.clone())).collect(),
            biases: self.biases.iter().map(|b| tape.var(b.clone())).collect(),
        }
    }

    /// Records a forward pass over the rows of `x` (raw features). `masks`,
    /// when given, has one `n x width` matrix per hidden layer.
    pub fn forward_tape(&self, tape: &mut Tape, p: &Bound, x: Var, masks: Option<&[Mat]>) -> TapeForward {
        let shift = tape.constant(
            Mat::from_shape_vec((1, self.input_dim()), self.norm.in_shift.iter().map(|v| -v).collect())
                .expect("shift row"),
        );
        let inv = Mat::from_shape_vec((1, self.input_dim()), self.norm.in_scale.iter().map(|v| 1.0 / v).collect())
            .expect("scale row");
        let z = tape.add_row(x, shift);
        let mut h = tape.mul_const(z, inv);
        let mut gates = Vec::new();
        let last = self.weights.len() - 1;
        for l in 0..last {
            let a = tape.matmul(h, p.weights[l]);
            let a = tape.add_row(a, p.biases[l]);
            let mut gate = tape.value(a).mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            let r = tape.relu(a);
            h = match masks {
                Some(ms) => {
                    gate *= &ms[l];
                    tape.mul_const(r, ms[l].clone())
                }
                None => r,
            };
            gates.push(gate);
        }
        let out = tape.matmul(h, p.weights[last]);
        let out = tape.add_row(out, p.biases[last]);
        let out = tape.scale(out, self.norm.out_scale);
        let c = tape.constant(Mat::from_elem((1, 1), self.norm.out_shift));
        let y = tape.add_row(out, c);
        TapeForward { y, h, gates }
    }

    /// `dy/dx` for every row as an explicit product of layer Jacobians,
    /// recorded on the tape so it can itself be differentiated with respect
    /// to the weights. ReLU second derivatives vanish, so the gates enter as
    /// constants.
    pub fn sensitivity_tape(&self, tape: &mut Tape, p: &Bound, gates: &[Mat], n: usize) -> Var {
        let last = self.weights.len() - 1;
        let ones = tape.constant(Mat::ones((n, 1)));
        let wt = tape.transpose(p.weights[last]);
        let mut g = tape.matmul(ones, wt);
        for l in (0..last).rev() {
            g = tape.mul_const(g, gates[l].clone());
            let wt = tape.transpose(p.weights[l]);
            g = tape.matmul(g, wt);
        }
        let scale = Mat::from_shape_vec(
            (1, self.input_dim()),
            self.norm
                .in_scale
                .iter()
                .map(|s| self.norm.out_scale / s)
                .collect(),
        )
        .expect("scale row");
        tape.mul_const(g, scale)
    }

    fn check_width(&self, got: usize) -> Result<()> {
        if got != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got,
            });
        }
        Ok(())
    }

    /// Predictions for every row of `x`.
    pub fn predict_batch(&self, x: &Mat, mode: Mode) -> Result<Vec<f64>> {
        self.check_width(x.ncols())?;
        let masks = match mode {
            Mode::Eval => None,
            Mode::Train { stream, mask_id } => Some(self.dropout_masks(stream, &vec![mask_id; x.nrows()])),
        };
        let mut tape = Tape::new();
        let p = Bound {
            weights: self.weights.iter().map(|w| tape.constant(w.clone())).collect(),
            biases: self.biases.iter().map(|b| tape.constant(b.clone())).collect(),
        };
        let xv = tape.constant(x.clone());
        let f = self.forward_tape(&mut tape, &p, xv, masks.as_deref());
        Ok(tape.value(f.y).column(0).to_vec())
    }

    /// Prediction for one feature vector.
    pub fn forward(&self, x: &[f64], mode: Mode) -> Result<f64> {
        self.check_width(x.len())?;
        let m = Mat::from_shape_vec((1, x.len()), x.to_vec()).expect("row");
        Ok(self.predict_batch(&m, mode)?[0])
    }

    /// `dy/dx_k` for every row of `x`, by reverse mode in eval mode.
    pub fn input_sensitivities_batch(&self, x: &Mat) -> Result<Mat> {
        self.check_width(x.ncols())?;
        let mut tape = Tape::new();
        let p = Bound {
            weights: self.weights.iter().map(|w| tape.constant(w.clone())).collect(),
            biases: self.biases.iter().map(|b| tape.constant(b.clone())).collect(),
        };
        let xv = tape.var(x.clone());
        let f = self.forward_tape(&mut tape, &p, xv, None);
        // rows are independent, so d(sum y)/dx holds each row's own gradient
        let s = tape.sum(f.y);
        let mut g = tape.backward(s);
        Ok(g.take_or_zeros(xv, x.dim()))
    }

    pub fn input_sensitivities(&self, x: &[f64]) -> Result<Vec<f64>> {
        let m = Mat::from_shape_vec((1, x.len()), x.to_vec()).expect("row");
        Ok(self.input_sensitivities_batch(&m)?.row(0).to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::{atom_counts, mass_vector, molecular_weight, parse_smiles};
    use crate::rng::Purpose;

    fn stream(seed: u64) -> RandomStream {
        RandomStream::new(seed, Purpose::Init)
    }

    #[test]
    fn init_is_deterministic() {
        let a = mlp_init(&[5, 8, 1], stream(3), 0.1).unwrap();
        let b = mlp_init(&[5, 8, 1], stream(3), 0.1).unwrap();
        assert_eq!(a.to_flat(), b.to_flat());
        assert_ne!(a.to_flat(), mlp_init(&[5, 8, 1], stream(4), 0.1).unwrap().to_flat());
    }

    #[test]
    fn he_variance() {
        let m = mlp_init(&[50, 200, 1], stream(1), 0.0).unwrap();
        let w = &m.weights[0];
        let var = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        let want = 2.0 / 50.0;
        assert!((var - want).abs() < 0.2 * want, "{var}");
    }

    #[test]
    fn zero_weights_give_final_bias() {
        let mut m = mlp_init(&[3, 4, 1], stream(1), 0.0).unwrap();
        m.weights.iter_mut().for_each(|w| w.fill(0.0));
        m.biases[1][[0, 0]] = 2.5;
        assert_eq!(m.forward(&[1.0, 2.0, 3.0], Mode::Eval).unwrap(), 2.5);
    }

    #[test]
    fn mass_weights_reproduce_molecular_weight() {
        let mut m = mlp_init(&[12, 1], stream(1), 0.0).unwrap();
        let masses = mass_vector();
        for (k, v) in masses.iter().enumerate() {
            m.weights[0][[k, 0]] = *v;
        }
        let mol = parse_smiles("CC(=O)Nc1ccc(O)cc1").unwrap();
        let x: Vec<f64> = atom_counts(&mol).iter().map(|&c| c as f64).collect();
        let y = m.forward(&x, Mode::Eval).unwrap();
        assert!((y - molecular_weight(&mol)).abs() < 1e-9);
        assert_eq!(m.input_sensitivities(&x).unwrap(), masses.to_vec());
    }

    #[test]
    fn mask_ids_are_reusable() {
        let m = mlp_init(&[4, 16, 16, 1], stream(2), 0.5).unwrap();
        let x = [0.3, -0.2, 1.0, 0.5];
        let ds = RandomStream::new(9, Purpose::Dropout);
        let a = m.forward(&x, Mode::Train { stream: ds, mask_id: 7 }).unwrap();
        let b = m.forward(&x, Mode::Train { stream: ds, mask_id: 7 }).unwrap();
        let c = m.forward(&x, Mode::Train { stream: ds, mask_id: 8 }).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn dimension_mismatch() {
        let m = mlp_init(&[4, 1], stream(2), 0.0).unwrap();
        assert!(matches!(
            m.forward(&[1.0], Mode::Eval),
            Err(Error::DimensionMismatch { expected: 4, got: 1 })
        ));
    }

    #[test]
    fn sensitivity_chain_matches_reverse_mode() {
        let mut m = mlp_init(&[6, 9, 7, 1], stream(5), 0.0).unwrap();
        m.norm = Normalization {
            in_shift: vec![0.1, 0.2, -0.3, 0.0, 1.0, 2.0],
            in_scale: vec![1.0, 2.0, 0.5, 3.0, 1.5, 0.7],
            out_shift: 4.0,
            out_scale: 2.5,
        };
        let x = Array2::from_shape_fn((5, 6), |(i, j)| ((i * 7 + j * 3) % 11) as f64 / 5.0 - 1.0);
        let rev = m.input_sensitivities_batch(&x).unwrap();
        let mut tape = Tape::new();
        let p = m.bind(&mut tape);
        let xv = tape.constant(x.clone());
        let f = m.forward_tape(&mut tape, &p, xv, None);
        let s = m.sensitivity_tape(&mut tape, &p, &f.gates, 5);
        for (a, b) in tape.value(s).iter().zip(&rev) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
