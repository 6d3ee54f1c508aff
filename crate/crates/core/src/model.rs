//! Shared encoder and per-group decoder branches.
//!
//! The encoder maps `D → … → latent_dim`; each of the `T` decoder branches
//! mirrors it back to `D`. Hidden layers use `tanh`, the last layer of every
//! network is linear. Sample `i` is reconstructed by branch `groups[i]` only.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Array, Graph, NodeId};
use crate::container::{self, ContainerKind, Header};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `d_in × d_out`.
    pub weight: Array,
    /// `d_out`.
    pub bias: Array,
}

impl Layer {
    fn forward(&self, x: &Array, activate: bool) -> Array {
        let mut out = x.matmul(&self.weight).expect("validated shapes");
        let d = out.cols();
        for row in out.data_mut().chunks_mut(d) {
            for (o, b) in row.iter_mut().zip(self.bias.data()) {
                *o += b;
            }
        }
        if activate {
            out = out.map(f64::tanh);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    layer_dims: Vec<usize>,
    pub encoder: Vec<Layer>,
    pub decoders: Vec<Vec<Layer>>,
}

/// Encoder output, `n × latent_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBatch {
    pub h: Array,
}

fn xavier_layer(rng: &mut ChaCha8Rng, d_in: usize, d_out: usize) -> Layer {
    let limit = (6.0 / (d_in + d_out) as f64).sqrt();
    let data = (0..d_in * d_out)
        .map(|_| rng.random_range(-limit..=limit))
        .collect();
    Layer {
        weight: Array::matrix(d_in, d_out, data).expect("sized"),
        bias: Array::zeros(&[d_out]),
    }
}

pub fn init_params(layer_dims: &[usize], group_count: usize, seed: u64) -> Result<ModelParams> {
    validate_dims(layer_dims, group_count)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let encoder = layer_dims
        .windows(2)
        .map(|w| xavier_layer(&mut rng, w[0], w[1]))
        .collect();
    let reversed: Vec<usize> = layer_dims.iter().rev().copied().collect();
    let decoders = (0..group_count)
        .map(|_| {
            reversed
                .windows(2)
                .map(|w| xavier_layer(&mut rng, w[0], w[1]))
                .collect()
        })
        .collect();
    Ok(ModelParams {
        layer_dims: layer_dims.to_vec(),
        encoder,
        decoders,
    })
}

fn validate_dims(layer_dims: &[usize], group_count: usize) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(Error::invalid("need at least an input and a latent dimension"));
    }
    if layer_dims.contains(&0) {
        return Err(Error::invalid(format!(
            "layer dimensions must be positive: {layer_dims:?}"
        )));
    }
    if group_count == 0 {
        return Err(Error::invalid("need at least one decoder branch"));
    }
    Ok(())
}

impl ModelParams {
    /// Assembles parameters from explicit layers, checking that every shape
    /// chains and every branch mirrors the encoder.
    pub fn from_layers(encoder: Vec<Layer>, decoders: Vec<Vec<Layer>>) -> Result<Self> {
        let mut dims = Vec::with_capacity(encoder.len() + 1);
        for (l, layer) in encoder.iter().enumerate() {
            let (din, dout) = (layer.weight.rows(), layer.weight.cols());
            if l == 0 {
                dims.push(din);
            } else if dims[l] != din {
                return Err(Error::invalid(format!("encoder layer {l} does not chain")));
            }
            if layer.bias.shape() != [dout] {
                return Err(Error::invalid(format!("encoder layer {l} bias shape")));
            }
            dims.push(dout);
        }
        validate_dims(&dims, decoders.len())?;
        let reversed: Vec<usize> = dims.iter().rev().copied().collect();
        for (t, branch) in decoders.iter().enumerate() {
            if branch.len() != reversed.len() - 1 {
                return Err(Error::invalid(format!("branch {t} has the wrong depth")));
            }
            for (l, layer) in branch.iter().enumerate() {
                if layer.weight.shape() != [reversed[l], reversed[l + 1]]
                    || layer.bias.shape() != [reversed[l + 1]]
                {
                    return Err(Error::invalid(format!(
                        "branch {t} layer {l} does not mirror the encoder"
                    )));
                }
            }
        }
        Ok(Self {
            layer_dims: dims,
            encoder,
            decoders,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn latent_dim(&self) -> usize {
        *self.layer_dims.last().expect("validated")
    }

    pub fn group_count(&self) -> usize {
        self.decoders.len()
    }

    /// Every parameter array with its graph input name, in declaration
    /// order: encoder layers first, then branch 0, branch 1, ….
    pub fn named(&self) -> Vec<(String, &Array)> {
        let mut out = Vec::new();
        for (l, layer) in self.encoder.iter().enumerate() {
            out.push((format!("enc.{l}.w"), &layer.weight));
            out.push((format!("enc.{l}.b"), &layer.bias));
        }
        for (t, branch) in self.decoders.iter().enumerate() {
            for (l, layer) in branch.iter().enumerate() {
                out.push((format!("dec.{t}.{l}.w"), &layer.weight));
                out.push((format!("dec.{t}.{l}.b"), &layer.bias));
            }
        }
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Array)> {
        let mut out = Vec::new();
        for (l, layer) in self.encoder.iter_mut().enumerate() {
            out.push((format!("enc.{l}.w"), &mut layer.weight));
            out.push((format!("enc.{l}.b"), &mut layer.bias));
        }
        for (t, branch) in self.decoders.iter_mut().enumerate() {
            for (l, layer) in branch.iter_mut().enumerate() {
                out.push((format!("dec.{t}.{l}.w"), &mut layer.weight));
                out.push((format!("dec.{t}.{l}.b"), &mut layer.bias));
            }
        }
        out
    }

    /// Graph bindings for every parameter.
    pub fn bindings(&self) -> HashMap<String, Array> {
        self.named()
            .into_iter()
            .map(|(k, v)| (k, v.clone()))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.named().iter().map(|(_, a)| a.len()).sum()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = Header {
            kind: ContainerKind::Model,
            dims: self.layer_dims.iter().map(|&d| d as u64).collect(),
            groups: self.group_count() as u64,
        };
        let mut payload = Vec::with_capacity(self.parameter_count());
        for (_, a) in self.named() {
            payload.extend_from_slice(a.data());
        }
        container::write(path, &header, &payload, &[])
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, floats, _) = container::read(path, ContainerKind::Model)?;
        let dims: Vec<usize> = header.dims.iter().map(|&d| d as usize).collect();
        let mut params = init_params(&dims, header.groups as usize, 0)
            .map_err(|e| Error::format(path, e.to_string()))?;
        let expected = params.parameter_count();
        if floats.len() != expected {
            return Err(Error::format(
                path,
                format!("expected {expected} weights, found {}", floats.len()),
            ));
        }
        let mut offset = 0;
        for (_, a) in params.named_mut() {
            let len = a.len();
            a.data_mut().copy_from_slice(&floats[offset..offset + len]);
            offset += len;
        }
        Ok(params)
    }
}

fn check_width(x: &Array, expected: usize, what: &str) -> Result<()> {
    if x.ndim() != 2 || x.cols() != expected {
        return Err(Error::invalid(format!(
            "{what} has shape {:?}, expected n×{expected}",
            x.shape()
        )));
    }
    Ok(())
}

fn run_layers(layers: &[Layer], x: &Array) -> Array {
    let last = layers.len() - 1;
    layers
        .iter()
        .enumerate()
        .fold(x.clone(), |acc, (l, layer)| layer.forward(&acc, l < last))
}

pub fn encode(params: &ModelParams, x: &Array) -> Result<LatentBatch> {
    check_width(x, params.input_dim(), "input")?;
    Ok(LatentBatch {
        h: run_layers(&params.encoder, x),
    })
}

/// Reconstructs each row of `h` with the branch named by its group.
pub fn decode(params: &ModelParams, h: &LatentBatch, groups: &[usize]) -> Result<Array> {
    check_width(&h.h, params.latent_dim(), "latent batch")?;
    if groups.len() != h.h.rows() {
        return Err(Error::invalid(format!(
            "{} group ids for {} rows",
            groups.len(),
            h.h.rows()
        )));
    }
    let t_count = params.group_count();
    if let Some(&bad) = groups.iter().find(|&&g| g >= t_count) {
        return Err(Error::invalid(format!(
            "group id {bad} out of range for {t_count} decoder branches"
        )));
    }
    let n = groups.len();
    let mut out = Array::zeros(&[n, params.input_dim()]);
    for t in 0..t_count {
        let idx: Vec<usize> = (0..n).filter(|&i| groups[i] == t).collect();
        if idx.is_empty() {
            continue;
        }
        let part = run_layers(&params.decoders[t], &h.h.select_rows(&idx));
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(i).copy_from_slice(part.row(r));
        }
    }
    Ok(out)
}

/// Parameter input nodes registered in a graph.
#[derive(Debug, Clone)]
pub struct ModelNodes {
    encoder: Vec<(NodeId, NodeId)>,
    decoders: Vec<Vec<(NodeId, NodeId)>>,
}

impl ModelNodes {
    /// Registers every parameter of `params` as a named graph input. Bind them
    /// with [`ModelParams::bindings`].
    pub fn register(graph: &mut Graph, params: &ModelParams) -> Self {
        let mut reg = |prefix: String, layer: &Layer| {
            (
                graph.input_shaped(&format!("{prefix}.w"), layer.weight.shape()),
                graph.input_shaped(&format!("{prefix}.b"), layer.bias.shape()),
            )
        };
        let encoder = params
            .encoder
            .iter()
            .enumerate()
            .map(|(l, layer)| reg(format!("enc.{l}"), layer))
            .collect();
        let decoders = params
            .decoders
            .iter()
            .enumerate()
            .map(|(t, branch)| {
                branch
                    .iter()
                    .enumerate()
                    .map(|(l, layer)| reg(format!("dec.{t}.{l}"), layer))
                    .collect()
            })
            .collect();
        Self { encoder, decoders }
    }

    fn layers(graph: &mut Graph, layers: &[(NodeId, NodeId)], x: NodeId) -> NodeId {
        let last = layers.len() - 1;
        let mut acc = x;
        for (l, &(w, b)) in layers.iter().enumerate() {
            let z = graph.matmul(acc, w);
            acc = graph.add(z, b);
            if l < last {
                acc = graph.tanh(acc);
            }
        }
        acc
    }

    pub fn encode(&self, graph: &mut Graph, x: NodeId) -> NodeId {
        Self::layers(graph, &self.encoder, x)
    }

    /// Routes rows of `h` through their group's branch and reassembles the
    /// reconstruction in the original row order.
    pub fn decode(&self, graph: &mut Graph, h: NodeId, groups: &[usize]) -> Result<NodeId> {
        let t_count = self.decoders.len();
        if let Some(&bad) = groups.iter().find(|&&g| g >= t_count) {
            return Err(Error::invalid(format!(
                "group id {bad} out of range for {t_count} decoder branches"
            )));
        }
        let n = groups.len();
        let mut parts = Vec::new();
        let mut position = vec![0usize; n];
        let mut offset = 0;
        for t in 0..t_count {
            let idx: Vec<usize> = (0..n).filter(|&i| groups[i] == t).collect();
            if idx.is_empty() {
                continue;
            }
            for (r, &i) in idx.iter().enumerate() {
                position[i] = offset + r;
            }
            offset += idx.len();
            let rows = graph.select_rows(h, idx);
            parts.push(Self::layers(graph, &self.decoders[t], rows));
        }
        let stacked = graph.concat_rows(parts);
        Ok(graph.select_rows(stacked, position))
    }
}
