use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use super::Mlp;
use crate::error::{Error, Result};

/// Activations cached by a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    start: usize,
    /// Post-gate input of each layer in `start..layers.len()`.
    inputs: Vec<Array2<f64>>,
    /// Pre-gate output `h` of hidden layers `first_hidden..encoder_depth`.
    pre_gate: Vec<Array2<f64>>,
    first_hidden: usize,
    gates: Option<Vec<f64>>,
    layer_shapes: Vec<(usize, usize)>,
}

impl Tape {
    /// Pre-gate activations of hidden layer `k`, if cached.
    pub fn hidden(&self, k: usize) -> Option<ArrayView2<'_, f64>> {
        k.checked_sub(self.first_hidden)
            .and_then(|i| self.pre_gate.get(i))
            .map(Array2::view)
    }

    pub fn batch_size(&self) -> usize {
        self.inputs[0].nrows()
    }
}

#[derive(Debug, Clone)]
pub struct Forward {
    /// Pre-softmax scores `[N × C]`.
    pub logits: Array2<f64>,
    pub tape: Tape,
}

impl Forward {
    /// Encoder output `ẑ` (post-gate), `[N × d]`.
    pub fn bottleneck(&self) -> ArrayView2<'_, f64> {
        self.tape.inputs.last().expect("tape holds the head input").view()
    }
}

/// Per-parameter gradient buffers, shaped like the model.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    /// Flat views in `[w0, b0, w1, b1, ...]` order, matching [`Mlp::param_slices_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.as_slice().expect("standard layout"));
            out.push(b.as_slice().expect("standard layout"));
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BackwardOptions {
    /// Accumulate weight and bias gradients (only valid for taped runs from layer 0).
    pub params: bool,
    /// Accumulate `∂L/∂g_i = Σ_n ∂L/∂ĥ_{n,i} · h_{n,i}` for every gate multiplier.
    pub gates: bool,
}

#[derive(Debug, Clone)]
pub struct Backward {
    pub params: Option<Gradients>,
    /// One entry per hidden neuron; neurons before the taped range stay zero.
    pub gates: Option<Vec<f64>>,
}

fn check_finite(x: ArrayView2<f64>, what: &str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite value in {what}")))
    }
}

fn apply_gates(mut h: Array2<f64>, gates: Option<&[f64]>, offset: usize) -> Array2<f64> {
    if let Some(g) = gates {
        let row = ArrayView1::from(&g[offset..offset + h.ncols()]);
        h *= &row;
    }
    h
}

impl Mlp {
    /// Full forward pass. `gates` multiplies each hidden neuron's activation
    /// (a boolean mask is the 0/1 case) and must cover every hidden neuron.
    pub fn forward(&self, input: ArrayView2<f64>, gates: Option<&[f64]>) -> Result<Forward> {
        self.forward_from(0, input, gates)
    }

    /// Forward pass resuming at layer `start`.
    ///
    /// For `start == 0` the argument is the network input; otherwise it is the
    /// pre-gate activation of hidden layer `start - 1`, which lets callers
    /// cache a frozen prefix of the encoder.
    pub fn forward_from(
        &self,
        start: usize,
        input: ArrayView2<f64>,
        gates: Option<&[f64]>,
    ) -> Result<Forward> {
        let depth = self.encoder_depth();
        if start > depth {
            return Err(Error::dim(format!("cannot start at layer {start} of {}", depth + 1)));
        }
        let expected = if start == 0 {
            self.input_dim()
        } else {
            self.layers[start - 1].output_dim()
        };
        if input.ncols() != expected {
            return Err(Error::dim(format!(
                "batch width {} does not match expected {expected}",
                input.ncols()
            )));
        }
        if let Some(g) = gates {
            if g.len() != self.hidden_count() {
                return Err(Error::dim(format!(
                    "gate vector has {} entries for {} hidden neurons",
                    g.len(),
                    self.hidden_count()
                )));
            }
        }
        check_finite(input, "forward input")?;

        let offsets = self.hidden_offsets();
        let first_hidden = start.saturating_sub(1);
        let mut pre_gate = Vec::new();
        let mut inputs = Vec::with_capacity(self.layers.len() - start);

        let mut current = if start == 0 {
            input.to_owned()
        } else {
            let h = input.to_owned();
            pre_gate.push(h.clone());
            apply_gates(h, gates, offsets[start - 1])
        };

        let mut logits = None;
        for l in start..self.layers.len() {
            let layer = &self.layers[l];
            let mut z = current.dot(&layer.weight);
            z += &layer.bias;
            let act = layer.activation;
            if act != super::Activation::None {
                z.mapv_inplace(|v| act.apply(v));
            }
            inputs.push(current);
            if l < depth {
                pre_gate.push(z.clone());
                current = apply_gates(z, gates, offsets[l]);
            } else {
                logits = Some(z);
                current = Array2::zeros((0, 0));
            }
        }
        let _ = current;

        Ok(Forward {
            logits: logits.expect("head layer always runs"),
            tape: Tape {
                start,
                inputs,
                pre_gate,
                first_hidden,
                gates: gates.map(<[f64]>::to_vec),
                layer_shapes: self
                    .layers
                    .iter()
                    .map(|l| (l.input_dim(), l.output_dim()))
                    .collect(),
            },
        })
    }

    /// Backpropagates `grad_logits` (and optionally an extra gradient arriving
    /// at the bottleneck, e.g. from an auxiliary head) through a taped pass.
    pub fn backward(
        &self,
        tape: &Tape,
        grad_logits: ArrayView2<f64>,
        grad_bottleneck: Option<ArrayView2<f64>>,
        opts: BackwardOptions,
    ) -> Result<Backward> {
        let shapes: Vec<_> = self
            .layers
            .iter()
            .map(|l| (l.input_dim(), l.output_dim()))
            .collect();
        if shapes != tape.layer_shapes {
            return Err(Error::State("tape was recorded on a different model".into()));
        }
        if opts.params && tape.start != 0 {
            return Err(Error::State(
                "parameter gradients need a tape recorded from layer 0".into(),
            ));
        }
        let n = tape.batch_size();
        if grad_logits.dim() != (n, self.output_dim()) {
            return Err(Error::dim(format!(
                "logit gradient has shape {:?}, expected ({n}, {})",
                grad_logits.dim(),
                self.output_dim()
            )));
        }
        if let Some(gb) = grad_bottleneck {
            if gb.dim() != (n, self.bottleneck_dim()) {
                return Err(Error::dim("bottleneck gradient shape mismatch"));
            }
        }

        let depth = self.encoder_depth();
        let offsets = self.hidden_offsets();
        let mut weight_grads: Vec<Option<Array2<f64>>> = vec![None; self.layers.len()];
        let mut bias_grads: Vec<Option<Array1<f64>>> = vec![None; self.layers.len()];
        let mut gate_grads = opts.gates.then(|| vec![0.0; self.hidden_count()]);

        let mut delta = grad_logits.to_owned();
        for l in (tape.start..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &tape.inputs[l - tape.start];
            if opts.params {
                weight_grads[l] = Some(input.t().dot(&delta));
                bias_grads[l] = Some(delta.sum_axis(Axis(0)));
            }
            if l == 0 {
                break;
            }
            // Gradient w.r.t. the post-gate output of hidden layer l-1.
            let mut d_in = delta.dot(&layer.weight.t());
            if l == depth {
                if let Some(gb) = grad_bottleneck {
                    d_in += &gb;
                }
            }
            let k = l - 1;
            let h = tape.hidden(k).expect("hidden activations cached");
            if let Some(gg) = gate_grads.as_mut() {
                let sums = (&d_in * &h).sum_axis(Axis(0));
                gg[offsets[k]..offsets[k + 1]].copy_from_slice(sums.as_slice().unwrap());
            }
            if l == tape.start {
                break;
            }
            if let Some(g) = &tape.gates {
                let row = ArrayView1::from(&g[offsets[k]..offsets[k + 1]]);
                d_in *= &row;
            }
            let act = self.layers[k].activation;
            Zip::from(&mut d_in)
                .and(&h)
                .for_each(|d, &y| *d *= act.derivative_from_output(y));
            delta = d_in;
        }

        let params = if opts.params {
            Some(Gradients {
                weights: weight_grads.into_iter().map(|w| w.unwrap()).collect(),
                biases: bias_grads.into_iter().map(|b| b.unwrap()).collect(),
            })
        } else {
            None
        };
        Ok(Backward {
            params,
            gates: gate_grads,
        })
    }
}
