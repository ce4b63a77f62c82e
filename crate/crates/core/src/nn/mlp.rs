use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::collocation::Axis;
use crate::error::{Error, Result};

/// Fully connected network with tanh hidden layers and an affine scalar
/// output. Inputs pass through a fixed affine map `u = (x - offset) * scale`
/// before the first layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    widths: Vec<usize>,
    params: Vec<f64>,
    offsets: Vec<usize>,
    input_offset: Vec<f64>,
    input_scale: Vec<f64>,
}

/// Value, input gradient and row-major input Hessian of a scalar network.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
}

impl Jet {
    pub fn hess_at(&self, i: usize, j: usize) -> f64 {
        self.hess[i * self.grad.len() + j]
    }
}

impl Mlp {
    /// All-zero network with identity input map. `widths` runs from the input
    /// count to the output count, which must be 1.
    pub fn zeros(widths: &[usize]) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidConfig(format!("bad layer widths {widths:?}")));
        }
        if *widths.last().unwrap() != 1 {
            return Err(Error::InvalidConfig("network output width must be 1".into()));
        }
        let mut offsets = Vec::with_capacity(widths.len() - 1);
        let mut n = 0;
        for w in widths.windows(2) {
            offsets.push(n);
            n += w[1] * w[0] + w[1];
        }
        let n_in = widths[0];
        Ok(Self {
            widths: widths.to_vec(),
            params: vec![0.0; n],
            offsets,
            input_offset: vec![0.0; n_in],
            input_scale: vec![1.0; n_in],
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(widths)?;
        for k in 0..net.n_layers() {
            let (n_in, n_out) = (net.widths[k], net.widths[k + 1]);
            let limit = (6.0 / (n_in + n_out) as f64).sqrt();
            let o = net.offsets[k];
            for w in &mut net.params[o..o + n_in * n_out] {
                *w = rng.random_range(-limit..limit);
            }
        }
        Ok(net)
    }

    /// Map each input axis onto `[-1, 1]`.
    pub fn with_input_axes(mut self, axes: &[Axis]) -> Result<Self> {
        if axes.len() != self.n_inputs() {
            return Err(Error::ShapeMismatch { expected: self.n_inputs(), got: axes.len() });
        }
        self.input_offset = axes.iter().map(|a| 0.5 * (a.min + a.max)).collect();
        self.input_scale = axes.iter().map(|a| 2.0 / (a.max - a.min)).collect();
        Ok(self)
    }

    pub fn with_input_map(mut self, offset: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        for v in [&offset, &scale] {
            if v.len() != self.n_inputs() {
                return Err(Error::ShapeMismatch { expected: self.n_inputs(), got: v.len() });
            }
        }
        self.input_offset = offset;
        self.input_scale = scale;
        Ok(self)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn n_inputs(&self) -> usize {
        self.widths[0]
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn input_offset(&self) -> &[f64] {
        &self.input_offset
    }

    pub fn input_scale(&self) -> &[f64] {
        &self.input_scale
    }

    /// Weight matrix (row-major, `out x in`) and bias of layer `k`.
    pub fn layer(&self, k: usize) -> (&[f64], &[f64]) {
        let (n_in, n_out) = (self.widths[k], self.widths[k + 1]);
        let o = self.offsets[k];
        let (w, rest) = self.params[o..].split_at(n_in * n_out);
        (w, &rest[..n_out])
    }

    pub fn layer_mut(&mut self, k: usize) -> (&mut [f64], &mut [f64]) {
        let (n_in, n_out) = (self.widths[k], self.widths[k + 1]);
        let o = self.offsets[k];
        let (w, rest) = self.params[o..].split_at_mut(n_in * n_out);
        (w, &mut rest[..n_out])
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_inputs() {
            return Err(Error::ShapeMismatch { expected: self.n_inputs(), got: x.len() });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        let mut a: Vec<f64> = self.normalize(x);
        let mut next = Vec::new();
        for k in 0..self.n_layers() {
            let (w, b) = self.layer(k);
            affine(w, b, &a, &mut next);
            if k + 1 < self.n_layers() {
                next.iter_mut().for_each(|z| *z = z.tanh());
            }
            std::mem::swap(&mut a, &mut next);
        }
        Ok(a[0])
    }

    /// Forward pass over a row-major batch of inputs.
    pub fn forward_batch(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        let n = self.n_inputs();
        if !inputs.len().is_multiple_of(n) {
            return Err(Error::ShapeMismatch { expected: n, got: inputs.len() % n });
        }
        inputs.chunks_exact(n).map(|x| self.forward(x)).collect()
    }

    pub fn input_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.jet(x)?.grad)
    }

    /// Row-major `n_inputs x n_inputs` Hessian.
    pub fn input_hessian(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.jet(x)?.hess)
    }

    /// Value with exact first and second input derivatives, propagated
    /// forward through the layers.
    pub fn jet(&self, x: &[f64]) -> Result<Jet> {
        self.check(x)?;
        let d = self.n_inputs();
        let mut a = self.normalize(x);
        // da[i*d + p], dda[(i*d + p)*d + q]
        let mut da = vec![0.0; d * d];
        for p in 0..d {
            da[p * d + p] = self.input_scale[p];
        }
        let mut dda = vec![0.0; d * d * d];
        for k in 0..self.n_layers() {
            let (w, b) = self.layer(k);
            let (n_in, n_out) = (self.widths[k], self.widths[k + 1]);
            let mut z = vec![0.0; n_out];
            let mut dz = vec![0.0; n_out * d];
            let mut ddz = vec![0.0; n_out * d * d];
            for i in 0..n_out {
                let row = &w[i * n_in..(i + 1) * n_in];
                z[i] = b[i] + dot(row, &a);
                for (j, &wij) in row.iter().enumerate() {
                    for p in 0..d {
                        dz[i * d + p] += wij * da[j * d + p];
                    }
                    for pq in 0..d * d {
                        ddz[i * d * d + pq] += wij * dda[j * d * d + pq];
                    }
                }
            }
            if k + 1 < self.n_layers() {
                for i in 0..n_out {
                    let h = z[i].tanh();
                    let d1 = 1.0 - h * h;
                    let d2 = -2.0 * h * d1;
                    z[i] = h;
                    for p in 0..d {
                        for q in 0..d {
                            let idx = i * d * d + p * d + q;
                            ddz[idx] = d2 * dz[i * d + p] * dz[i * d + q] + d1 * ddz[idx];
                        }
                    }
                    for p in 0..d {
                        dz[i * d + p] *= d1;
                    }
                }
            }
            a = z;
            da = dz;
            dda = ddz;
        }
        // exact symmetry: average the two triangles
        for p in 0..d {
            for q in p + 1..d {
                let m = 0.5 * (dda[p * d + q] + dda[q * d + p]);
                dda[p * d + q] = m;
                dda[q * d + p] = m;
            }
        }
        Ok(Jet { value: a[0], grad: da, hess: dda })
    }

    fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.input_offset.iter().zip(&self.input_scale))
            .map(|(v, (o, s))| (v - o) * s)
            .collect()
    }

    pub(crate) fn tape(&self) -> Tape {
        Tape {
            a: self.widths.iter().map(|&w| vec![0.0; w]).collect(),
            da: self.widths.iter().map(|&w| vec![0.0; w]).collect(),
            dz: self.widths.iter().map(|&w| vec![0.0; w]).collect(),
            g: self.widths.iter().map(|&w| vec![0.0; w]).collect(),
            dg: self.widths.iter().map(|&w| vec![0.0; w]).collect(),
        }
    }

    /// Output and its derivative along input coordinate `dir`, recording
    /// intermediates for [`Mlp::backward_tangent`].
    pub(crate) fn forward_tangent(&self, x: &[f64], dir: usize, tape: &mut Tape) -> (f64, f64) {
        for (p, v) in x.iter().enumerate() {
            tape.a[0][p] = (v - self.input_offset[p]) * self.input_scale[p];
            tape.da[0][p] = 0.0;
        }
        tape.da[0][dir] = self.input_scale[dir];
        let last = self.n_layers() - 1;
        for k in 0..=last {
            let (w, b) = self.layer(k);
            let n_in = self.widths[k];
            let (lo, hi) = tape.a.split_at_mut(k + 1);
            let (dlo, dhi) = tape.da.split_at_mut(k + 1);
            let (a_in, da_in) = (&lo[k], &dlo[k]);
            let (a_out, da_out) = (&mut hi[0], &mut dhi[0]);
            for i in 0..a_out.len() {
                let row = &w[i * n_in..(i + 1) * n_in];
                let z = b[i] + dot(row, a_in);
                let dz = dot(row, da_in);
                if k < last {
                    let h = z.tanh();
                    a_out[i] = h;
                    tape.dz[k + 1][i] = dz;
                    da_out[i] = (1.0 - h * h) * dz;
                } else {
                    a_out[i] = z;
                    da_out[i] = dz;
                }
            }
        }
        (tape.a[last + 1][0], tape.da[last + 1][0])
    }

    /// Accumulate into `grad` the weight gradient of a loss whose adjoints
    /// with respect to the output and its directional derivative are
    /// `y_bar` and `dy_bar`.
    pub(crate) fn backward_tangent(&self, tape: &mut Tape, y_bar: f64, dy_bar: f64, grad: &mut [f64]) {
        let last = self.n_layers() - 1;
        tape.g[last + 1][0] = y_bar;
        tape.dg[last + 1][0] = dy_bar;
        for k in (0..=last).rev() {
            let (n_in, n_out) = (self.widths[k], self.widths[k + 1]);
            // adjoints of the pre-activations z and z-dot of layer k
            if k < last {
                let (h, dz) = (&tape.a[k + 1], &tape.dz[k + 1]);
                let (g, dg) = (&mut tape.g[k + 1], &mut tape.dg[k + 1]);
                for i in 0..n_out {
                    let d1 = 1.0 - h[i] * h[i];
                    let zb = d1 * (g[i] - 2.0 * h[i] * dz[i] * dg[i]);
                    dg[i] *= d1;
                    g[i] = zb;
                }
            }
            let o = self.offsets[k];
            let (w, _) = self.layer(k);
            let (glo, ghi) = tape.g.split_at_mut(k + 1);
            let (dglo, dghi) = tape.dg.split_at_mut(k + 1);
            let (zb, dzb) = (&ghi[0], &dghi[0]);
            let (a, da) = (&tape.a[k], &tape.da[k]);
            let (gw, gb) = grad[o..o + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for i in 0..n_out {
                let row = &mut gw[i * n_in..(i + 1) * n_in];
                for j in 0..n_in {
                    row[j] += zb[i] * a[j] + dzb[i] * da[j];
                }
                gb[i] += zb[i];
            }
            if k > 0 {
                let (ab, dab) = (&mut glo[k], &mut dglo[k]);
                ab.iter_mut().for_each(|v| *v = 0.0);
                dab.iter_mut().for_each(|v| *v = 0.0);
                for i in 0..n_out {
                    let row = &w[i * n_in..(i + 1) * n_in];
                    for j in 0..n_in {
                        ab[j] += row[j] * zb[i];
                        dab[j] += row[j] * dzb[i];
                    }
                }
            }
        }
    }

    pub fn to_file(&self) -> MlpFile {
        let layers = (0..self.n_layers())
            .map(|k| {
                let (w, b) = self.layer(k);
                LayerFile {
                    weights: w.chunks_exact(self.widths[k]).map(<[f64]>::to_vec).collect(),
                    bias: b.to_vec(),
                }
            })
            .collect();
        MlpFile {
            widths: self.widths.clone(),
            input_offset: self.input_offset.clone(),
            input_scale: self.input_scale.clone(),
            layers,
        }
    }

    pub fn from_file(file: &MlpFile) -> Result<Self> {
        let mut net = Self::zeros(&file.widths)?
            .with_input_map(file.input_offset.clone(), file.input_scale.clone())?;
        if file.layers.len() != net.n_layers() {
            return Err(Error::ShapeMismatch { expected: net.n_layers(), got: file.layers.len() });
        }
        for (k, layer) in file.layers.iter().enumerate() {
            let (n_in, n_out) = (file.widths[k], file.widths[k + 1]);
            if layer.weights.len() != n_out || layer.bias.len() != n_out {
                return Err(Error::ShapeMismatch { expected: n_out, got: layer.weights.len() });
            }
            let (w, b) = net.layer_mut(k);
            for (i, row) in layer.weights.iter().enumerate() {
                if row.len() != n_in {
                    return Err(Error::ShapeMismatch { expected: n_in, got: row.len() });
                }
                w[i * n_in..(i + 1) * n_in].copy_from_slice(row);
            }
            b.copy_from_slice(&layer.bias);
        }
        if !net.params.iter().all(|v| v.is_finite()) {
            return Err(Error::Parse("non-finite network weight".into()));
        }
        Ok(net)
    }
}

/// Per-layer scratch for the tangent forward/backward passes.
#[derive(Debug, Clone)]
pub(crate) struct Tape {
    a: Vec<Vec<f64>>,
    da: Vec<Vec<f64>>,
    dz: Vec<Vec<f64>>,
    g: Vec<Vec<f64>>,
    dg: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerFile {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpFile {
    pub widths: Vec<usize>,
    pub input_offset: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub layers: Vec<LayerFile>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn affine(w: &[f64], b: &[f64], a: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.extend(b.iter().enumerate().map(|(i, bi)| bi + dot(&w[i * a.len()..(i + 1) * a.len()], a)));
}
