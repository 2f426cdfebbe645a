//! Layer lists with a build-time shape audit and a generic forward pass.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{ModelError, Profile};
use crate::tensor::{batch_norm, fully_connected, Activation, BnMode, ParamSet, RunningStats, Tensor};

/// Running batch-norm statistics keyed by `"{network}.{layer}"`.
pub type BnStore = BTreeMap<String, RunningStats>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    TransConv,
    /// Flattens its input, then applies a fully connected map.
    Dense,
}

impl LayerKind {
    fn name(self) -> &'static str {
        match self {
            LayerKind::Conv => "conv",
            LayerKind::TransConv => "transconv",
            LayerKind::Dense => "dense",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub filters: usize,
    pub kernel: Vec<usize>,
    pub stride: Vec<usize>,
    pub batch_norm: bool,
    pub activation: Activation,
    /// Channels concatenated onto this layer's input from a skip source.
    pub skip_channels: usize,
}

impl LayerSpec {
    pub fn conv(filters: usize, kernel: &[usize], stride: &[usize], batch_norm: bool, activation: Activation) -> Self {
        LayerSpec {
            kind: LayerKind::Conv,
            filters,
            kernel: kernel.to_vec(),
            stride: stride.to_vec(),
            batch_norm,
            activation,
            skip_channels: 0,
        }
    }

    pub fn transconv(filters: usize, kernel: &[usize], stride: &[usize], batch_norm: bool, activation: Activation) -> Self {
        LayerSpec {
            kind: LayerKind::TransConv,
            ..LayerSpec::conv(filters, kernel, stride, batch_norm, activation)
        }
    }

    pub fn dense(filters: usize, activation: Activation) -> Self {
        LayerSpec {
            kind: LayerKind::Dense,
            ..LayerSpec::conv(filters, &[], &[], false, activation)
        }
    }
}

/// Ordered layers plus the per-sample input and declared output shapes
/// (channels last, batch axis excluded).
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    pub name: String,
    pub profile: Profile,
    pub input: Vec<usize>,
    pub target: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

fn dims(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join("x")
}

fn parse_dims(s: &str) -> Option<Vec<usize>> {
    if s.is_empty() {
        return Some(Vec::new());
    }
    s.split('x').map(|d| d.parse().ok()).collect()
}

fn activation_name(a: Activation) -> String {
    match a {
        Activation::Identity => "identity".into(),
        Activation::Relu => "relu".into(),
        Activation::LeakyRelu(s) => format!("lrelu:{s}"),
        Activation::Tanh => "tanh".into(),
    }
}

fn parse_activation(s: &str) -> Option<Activation> {
    Some(match s {
        "identity" => Activation::Identity,
        "relu" => Activation::Relu,
        "tanh" => Activation::Tanh,
        _ => Activation::LeakyRelu(s.strip_prefix("lrelu:")?.parse().ok()?),
    })
}

impl NetworkSpec {
    fn audit_error(&self, layer: usize, detail: String) -> ModelError {
        ModelError::Audit {
            network: self.name.clone(),
            layer,
            detail,
        }
    }

    /// Per-sample shape after each layer. Fails on the first layer whose
    /// geometry does not fit, or when the last shape misses the target.
    pub fn audit(&self) -> Result<Vec<Vec<usize>>, ModelError> {
        let mut shape = self.input.clone();
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            let Some((_, spatial)) = shape.split_last() else {
                return Err(self.audit_error(i, "empty input shape".into()));
            };
            if l.filters == 0 {
                return Err(self.audit_error(i, "zero filters".into()));
            }
            shape = match l.kind {
                LayerKind::Dense => {
                    if l.skip_channels != 0 {
                        return Err(self.audit_error(i, "dense layers take no skip input".into()));
                    }
                    vec![l.filters]
                }
                LayerKind::Conv | LayerKind::TransConv => {
                    if l.kernel.len() != spatial.len() || l.stride.len() != spatial.len() {
                        return Err(self.audit_error(
                            i,
                            format!("kernel {} / stride {} vs {} spatial axes", dims(&l.kernel), dims(&l.stride), spatial.len()),
                        ));
                    }
                    let mut next = Vec::with_capacity(spatial.len() + 1);
                    for ax in 0..spatial.len() {
                        let (n, k, s) = (spatial[ax], l.kernel[ax], l.stride[ax]);
                        if k == 0 || s == 0 {
                            return Err(self.audit_error(i, format!("axis {ax}: zero kernel or stride")));
                        }
                        next.push(match l.kind {
                            LayerKind::Conv if n < k => {
                                return Err(self.audit_error(i, format!("axis {ax}: extent {n} below kernel {k}")))
                            }
                            LayerKind::Conv => (n - k) / s + 1,
                            _ => (n - 1) * s + k,
                        });
                    }
                    next.push(l.filters);
                    next
                }
            };
            out.push(shape.clone());
        }
        if shape != self.target {
            return Err(self.audit_error(
                self.layers.len().saturating_sub(1),
                format!("output {} differs from target {}", dims(&shape), dims(&self.target)),
            ));
        }
        Ok(out)
    }

    /// Input shape of layer `i` before skip concatenation.
    pub fn layer_input(&self, i: usize) -> Result<Vec<usize>, ModelError> {
        Ok(if i == 0 { self.input.clone() } else { self.audit()?[i - 1].clone() })
    }

    pub fn batch_norm_layers(&self) -> usize {
        self.layers.iter().filter(|l| l.batch_norm).count()
    }

    /// Parameter tensors of every layer as `(name, shape)`, names relative
    /// to the network.
    pub fn param_shapes(&self) -> Result<Vec<(String, Vec<usize>)>, ModelError> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            let input = self.layer_input(i)?;
            let c_in = input.last().copied().unwrap_or(0) + l.skip_channels;
            let w = match l.kind {
                LayerKind::Dense => vec![input.iter().product(), l.filters],
                LayerKind::Conv => [l.kernel.clone(), vec![c_in, l.filters]].concat(),
                LayerKind::TransConv => [l.kernel.clone(), vec![l.filters, c_in]].concat(),
            };
            out.push((format!("{i}.w"), w));
            if l.batch_norm {
                out.push((format!("{i}.gamma"), vec![l.filters]));
                out.push((format!("{i}.beta"), vec![l.filters]));
            } else {
                out.push((format!("{i}.b"), vec![l.filters]));
            }
        }
        Ok(out)
    }

    pub fn param_count(&self) -> Result<usize, ModelError> {
        Ok(self.param_shapes()?.iter().map(|(_, s)| s.iter().product::<usize>()).sum())
    }

    /// UTF-8 `key=value` lines describing the network.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let p = &self.name;
        let _ = writeln!(s, "{p}.profile={}", self.profile.name());
        let _ = writeln!(s, "{p}.input={}", dims(&self.input));
        let _ = writeln!(s, "{p}.target={}", dims(&self.target));
        let _ = writeln!(s, "{p}.layers={}", self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            let _ = writeln!(
                s,
                "{p}.{i}=kind:{} filters:{} kernel:{} stride:{} bn:{} act:{} skip:{}",
                l.kind.name(),
                l.filters,
                dims(&l.kernel),
                dims(&l.stride),
                l.batch_norm as u8,
                activation_name(l.activation),
                l.skip_channels
            );
        }
        s
    }

    /// Parses the lines written by [`NetworkSpec::to_key_values`] for the
    /// network called `name`; other keys are ignored.
    pub fn from_key_values(name: &str, text: &str) -> Result<NetworkSpec, ModelError> {
        let bad = |m: String| ModelError::Config(format!("network {name}: {m}"));
        let mut map = BTreeMap::new();
        for line in text.lines() {
            if let Some((k, v)) = line.split_once('=') {
                if let Some(rest) = k.strip_prefix(name).and_then(|r| r.strip_prefix('.')) {
                    map.insert(rest.to_string(), v.to_string());
                }
            }
        }
        let get = |k: &str| map.get(k).cloned().ok_or_else(|| bad(format!("missing {k}")));
        let profile: Profile = get("profile")?.parse()?;
        let input = parse_dims(&get("input")?).ok_or_else(|| bad("bad input".into()))?;
        let target = parse_dims(&get("target")?).ok_or_else(|| bad("bad target".into()))?;
        let n: usize = get("layers")?.parse().map_err(|_| bad("bad layer count".into()))?;
        let mut layers = Vec::with_capacity(n);
        for i in 0..n {
            let line = get(&i.to_string())?;
            let mut f = BTreeMap::new();
            for part in line.split_whitespace() {
                let (k, v) = part.split_once(':').ok_or_else(|| bad(format!("layer {i}: '{part}'")))?;
                f.insert(k, v);
            }
            let field = |k: &str| f.get(k).copied().ok_or_else(|| bad(format!("layer {i}: missing {k}")));
            let num = |k: &str| -> Result<usize, ModelError> {
                field(k)?.parse().map_err(|_| bad(format!("layer {i}: bad {k}")))
            };
            let kind = match field("kind")? {
                "conv" => LayerKind::Conv,
                "transconv" => LayerKind::TransConv,
                "dense" => LayerKind::Dense,
                other => return Err(bad(format!("layer {i}: unknown kind {other}"))),
            };
            layers.push(LayerSpec {
                kind,
                filters: num("filters")?,
                kernel: parse_dims(field("kernel")?).ok_or_else(|| bad(format!("layer {i}: bad kernel")))?,
                stride: parse_dims(field("stride")?).ok_or_else(|| bad(format!("layer {i}: bad stride")))?,
                batch_norm: num("bn")? == 1,
                activation: parse_activation(field("act")?).ok_or_else(|| bad(format!("layer {i}: bad act")))?,
                skip_channels: num("skip")?,
            });
        }
        Ok(NetworkSpec {
            name: name.to_string(),
            profile,
            input,
            target,
            layers,
        })
    }
}

/// An audited network.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub spec: NetworkSpec,
    /// Per-sample output shape of each layer.
    pub shapes: Vec<Vec<usize>>,
}

/// Result of a forward pass: the output and every layer's activation.
pub struct Forward {
    pub output: Tensor,
    pub activations: Vec<Tensor>,
}

impl Network {
    pub fn new(spec: NetworkSpec) -> Result<Self, ModelError> {
        let shapes = spec.audit()?;
        Ok(Network { spec, shapes })
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    fn key(&self, rest: &str) -> String {
        format!("{}.{rest}", self.spec.name)
    }

    /// Draws initial parameters into `params` and fresh statistics into
    /// `bn`. Weights are normal with standard deviation `1/sqrt(fan_in)`;
    /// biases and shifts start at zero, scales at one.
    pub fn init(&self, rng: &mut ChaCha8Rng, params: &mut ParamSet, bn: &mut BnStore) -> Result<(), ModelError> {
        for (name, shape) in self.spec.param_shapes()? {
            let n: usize = shape.iter().product();
            let values = if name.ends_with(".w") {
                // dense [in, out], conv [k.., in, out], transconv [k.., out, in]
                let (k, ch) = shape.split_at(shape.len() - 2);
                let layer: usize = name.split('.').next().and_then(|i| i.parse().ok()).unwrap_or(0);
                let c_in = if self.spec.layers[layer].kind == LayerKind::TransConv { ch[1] } else { ch[0] };
                let fan_in = k.iter().product::<usize>() * c_in;
                let std = 1.0 / (fan_in as f64).sqrt();
                (0..n).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect()
            } else if name.ends_with(".gamma") {
                vec![1.0; n]
            } else {
                vec![0.0; n]
            };
            params.insert(self.key(&name), Tensor::param(&shape, values)?)?;
        }
        for (i, l) in self.spec.layers.iter().enumerate() {
            if l.batch_norm {
                bn.insert(self.key(&i.to_string()), RunningStats::new(l.filters));
            }
        }
        Ok(())
    }

    /// Runs the network on `x` (`[batch, input...]`). `skips[i]`, when
    /// present, is concatenated onto layer `i`'s input along the channel
    /// axis.
    pub fn forward(
        &self,
        params: &ParamSet,
        bn: &mut BnStore,
        mode: BnMode,
        x: &Tensor,
        skips: &[Option<Tensor>],
    ) -> Result<Forward, ModelError> {
        let batch = *x.shape().first().ok_or_else(|| ModelError::Shape(format!("{}: scalar input", self.name())))?;
        let mut want = vec![batch];
        want.extend(&self.spec.input);
        if x.shape() != want.as_slice() {
            return Err(ModelError::Shape(format!(
                "{}: input {:?}, expected {:?}",
                self.name(),
                x.shape(),
                want
            )));
        }
        let mut h = x.clone();
        let mut activations = Vec::with_capacity(self.spec.layers.len());
        for (i, l) in self.spec.layers.iter().enumerate() {
            if let Some(Some(s)) = skips.get(i) {
                let axis = h.ndim() - 1;
                h = Tensor::concat(&[h, s.clone()], axis)?;
            }
            let w = params.get(&self.key(&format!("{i}.w")))?;
            h = match l.kind {
                LayerKind::Conv => h.conv(w, &l.stride)?,
                LayerKind::TransConv => h.transposed_conv(w, &l.stride)?,
                LayerKind::Dense => {
                    let flat = h.reshape(&[batch, h.numel() / batch])?;
                    let zero = Tensor::zeros(&[l.filters]);
                    fully_connected(&flat, w, &zero)?
                }
            };
            if l.batch_norm {
                let stats = bn
                    .get_mut(&self.key(&i.to_string()))
                    .ok_or_else(|| ModelError::Shape(format!("{}: no statistics for layer {i}", self.name())))?;
                let gamma = params.get(&self.key(&format!("{i}.gamma")))?;
                let beta = params.get(&self.key(&format!("{i}.beta")))?;
                h = batch_norm(&h, gamma, beta, mode, stats)?;
            } else {
                let b = params.get(&self.key(&format!("{i}.b")))?;
                h = h.add(&b.broadcast_channel(h.shape())?)?;
            }
            h = l.activation.apply(&h);
            activations.push(h.clone());
        }
        Ok(Forward {
            output: h,
            activations,
        })
    }
}
