//! AdamW with global-norm gradient clipping. Weight decay is decoupled:
//! with zero gradients and fresh state, one step multiplies every weight by
//! exactly (1 - lr * wd).

use std::collections::BTreeMap;

use ddvqa_tensor::Tensor;

use crate::model::DdvqaModel;

/// Anything with named, ordered, mutably-visitable parameters.
pub trait ParameterSet {
    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor));
}

impl ParameterSet for DdvqaModel {
    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        DdvqaModel::for_each_param_mut(self, f);
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub weight_decay: f64,
    step_count: u64,
    state: BTreeMap<String, Moments>,
}

impl AdamW {
    pub fn new(lr: f64, weight_decay: f64) -> AdamW {
        AdamW {
            lr,
            weight_decay,
            step_count: 0,
            state: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update and replaces every parameter tensor (which also
    /// clears its gradient). `grad_clip <= 0` disables clipping.
    pub fn step(&mut self, model: &mut dyn ParameterSet, grad_clip: f64) {
        self.step_count += 1;
        let t = self.step_count;

        // Gradients in visit order; missing gradients count as zero.
        let mut grads: Vec<(String, Vec<f64>)> = Vec::new();
        model.for_each_param_mut(&mut |name, tensor| {
            let g = tensor
                .grad()
                .unwrap_or_else(|| vec![0.0; tensor.numel()]);
            grads.push((name.to_string(), g));
        });

        let norm: f64 = grads
            .iter()
            .flat_map(|(_, g)| g.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt();
        let scale = if grad_clip > 0.0 && norm > grad_clip {
            grad_clip / norm
        } else {
            1.0
        };

        let bias1 = 1.0 - BETA1.powi(t as i32);
        let bias2 = 1.0 - BETA2.powi(t as i32);
        let mut grads = grads.into_iter();
        let lr = self.lr;
        let wd = self.weight_decay;
        let state = &mut self.state;
        model.for_each_param_mut(&mut |name, tensor| {
            let (g_name, grad) = grads.next().expect("same traversal");
            debug_assert_eq!(g_name, name);
            let n = tensor.numel();
            let moments = state.entry(name.to_string()).or_insert_with(|| Moments {
                m: vec![0.0; n],
                v: vec![0.0; n],
            });
            let data = tensor.data();
            let mut updated = Vec::with_capacity(n);
            for i in 0..n {
                let g = grad[i] * scale;
                moments.m[i] = BETA1 * moments.m[i] + (1.0 - BETA1) * g;
                moments.v[i] = BETA2 * moments.v[i] + (1.0 - BETA2) * g * g;
                let m_hat = moments.m[i] / bias1;
                let v_hat = moments.v[i] / bias2;
                let decayed = data[i] * (1.0 - lr * wd);
                updated.push(decayed - lr * m_hat / (v_hat.sqrt() + EPS));
            }
            *tensor = Tensor::param(tensor.shape().to_vec(), updated).expect("same shape");
        });
    }

    /// Moment buffers as named f64 tensors for exact training resume.
    pub fn state_tensors(&self) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        let mut out = Vec::with_capacity(self.state.len() * 2);
        for (name, moments) in &self.state {
            out.push((format!("adam.m.{name}"), vec![moments.m.len()], moments.m.clone()));
            out.push((format!("adam.v.{name}"), vec![moments.v.len()], moments.v.clone()));
        }
        out
    }

    pub fn restore_state(
        &mut self,
        step_count: u64,
        tensors: &[(String, Vec<f64>)],
    ) {
        self.step_count = step_count;
        self.state.clear();
        let mut halves: BTreeMap<String, (Option<Vec<f64>>, Option<Vec<f64>>)> = BTreeMap::new();
        for (name, data) in tensors {
            if let Some(param) = name.strip_prefix("adam.m.") {
                halves.entry(param.to_string()).or_default().0 = Some(data.clone());
            } else if let Some(param) = name.strip_prefix("adam.v.") {
                halves.entry(param.to_string()).or_default().1 = Some(data.clone());
            }
        }
        for (param, (m, v)) in halves {
            if let (Some(m), Some(v)) = (m, v) {
                self.state.insert(param, Moments { m, v });
            }
        }
    }
}
