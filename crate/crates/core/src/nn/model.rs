//! The radiance decoder and the grasp decoder with their shared backbone.
//!
//! ```text
//! PE(p) ─┐
//!        ├─ FC+ReLU ─ FC+ReLU ─┬─ FC ─ softplus ─ σ
//! f_o ───┘   (shared backbone) ├─ FC(·, PE(ω)) ─ sigmoid ─ rgb
//!                              └─ FC ─ [score logit | a | b̂]
//! ```
//!
//! The first layer's weight is stored as two blocks, one for the position
//! encoding and one for the latent, so the latent projection is computed
//! once per object instead of once per sample. The function is the same as
//! a single layer over the concatenated input.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::encoding::{encode_into, encoded_len};
use super::matrix::{self, sigmoid, softplus, Matrix};
use super::params::{ParamId, ParameterStore};
use super::tape::{NodeId, Tape};
use crate::error::{invalid, Error, Result};
use crate::field::{GraspField, GraspOutput, RadianceField, RadianceOutput};
use crate::scene::{LatentCode, ObjectInstance, Vec3};

/// Number of backbone layers shared by both decoders.
pub const BACKBONE_LAYERS: usize = 2;

/// Width of the raw grasp head output: score logit, approach, lateral.
pub const GRASP_OUTPUTS: usize = 7;

/// Rows evaluated per inference batch.
const INFERENCE_CHUNK: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderConfig {
    pub latent_dim: usize,
    /// Width of both backbone layers.
    pub width: usize,
    /// Encoding frequencies for positions.
    pub pos_freqs: usize,
    /// Encoding frequencies for view directions.
    pub dir_freqs: usize,
    /// Prefix the raw input to both encodings.
    pub include_input: bool,
    /// Object-frame positions are multiplied by this before encoding.
    pub coord_scale: f64,
    /// Density is `density_scale · softplus(·)`, in 1/m.
    pub density_scale: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            latent_dim: 32,
            width: 64,
            pos_freqs: 6,
            dir_freqs: 2,
            include_input: true,
            coord_scale: 4.0,
            density_scale: 1.0,
        }
    }
}

impl DecoderConfig {
    pub fn pos_len(&self) -> usize {
        encoded_len(self.pos_freqs, self.include_input)
    }

    pub fn dir_len(&self) -> usize {
        encoded_len(self.dir_freqs, self.include_input)
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.width == 0 || self.pos_freqs == 0 {
            return Err(invalid("latent_dim, width and pos_freqs must be positive"));
        }
        if !(self.coord_scale > 0.0 && self.density_scale > 0.0) {
            return Err(invalid("coord_scale and density_scale must be positive"));
        }
        Ok(())
    }
}

/// Parameter classes; used to freeze parts of the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Backbone,
    SigmaHead,
    ColorHead,
    GraspHead,
    Latent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamCounts {
    /// Backbone plus density and color heads.
    pub radiance: usize,
    pub grasp_head: usize,
    pub latent_table: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Layout {
    w0_pos: ParamId,
    w0_latent: ParamId,
    b0: ParamId,
    w1: ParamId,
    b1: ParamId,
    w_sigma: ParamId,
    b_sigma: ParamId,
    w_color_feat: ParamId,
    w_color_dir: ParamId,
    b_color: ParamId,
    w_grasp: ParamId,
    b_grasp: ParamId,
    latents: ParamId,
}

/// Declared parameter order: `(name, group)`. Checkpoints store arrays in
/// this order.
pub const PARAM_NAMES: [(&str, ParamGroup); 13] = [
    ("backbone.0.weight_pos", ParamGroup::Backbone),
    ("backbone.0.weight_latent", ParamGroup::Backbone),
    ("backbone.0.bias", ParamGroup::Backbone),
    ("backbone.1.weight", ParamGroup::Backbone),
    ("backbone.1.bias", ParamGroup::Backbone),
    ("sigma.weight", ParamGroup::SigmaHead),
    ("sigma.bias", ParamGroup::SigmaHead),
    ("color.weight_feat", ParamGroup::ColorHead),
    ("color.weight_dir", ParamGroup::ColorHead),
    ("color.bias", ParamGroup::ColorHead),
    ("grasp.weight", ParamGroup::GraspHead),
    ("grasp.bias", ParamGroup::GraspHead),
    ("latents", ParamGroup::Latent),
];

/// Shapes in declared order.
pub(crate) fn param_shapes(c: &DecoderConfig, num_latents: usize) -> [(usize, usize); 13] {
    let w = c.width;
    [
        (c.pos_len(), w),
        (c.latent_dim, w),
        (1, w),
        (w, w),
        (1, w),
        (w, 1),
        (1, 1),
        (w, 3),
        (c.dir_len(), 3),
        (1, 3),
        (w, GRASP_OUTPUTS),
        (1, GRASP_OUTPUTS),
        (num_latents, c.latent_dim),
    ]
}

/// Decoder weights plus the latent table.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    config: DecoderConfig,
    params: ParameterStore,
    layout: Layout,
}

fn to_f32_grid(v: f64) -> f64 {
    v as f32 as f64
}

impl Model {
    /// Seeded initialization. Layers draw from `U(-1/√fan_in, 1/√fan_in)`,
    /// the density head starts at zero, latents draw from `N(0, latent_std²)`.
    /// All initial values are exactly representable as `f32`.
    pub fn new(
        config: DecoderConfig,
        num_latents: usize,
        latent_std: f64,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if !(latent_std >= 0.0 && latent_std.is_finite()) {
            return Err(invalid("latent_std must be non-negative"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shapes = param_shapes(&config, num_latents);
        let fan_in0 = (config.pos_len() + config.latent_dim) as f64;
        let fan_in = [
            fan_in0,
            fan_in0,
            fan_in0,
            config.width as f64,
            config.width as f64,
            0.0,
            0.0,
            (config.width + config.dir_len()) as f64,
            (config.width + config.dir_len()) as f64,
            (config.width + config.dir_len()) as f64,
            config.width as f64,
            config.width as f64,
            0.0,
        ];
        let normal = Normal::new(0.0, latent_std.max(0.0)).map_err(|e| invalid(e.to_string()))?;
        let mut params = ParameterStore::new();
        for (i, ((name, group), (r, c))) in PARAM_NAMES.iter().zip(shapes).enumerate() {
            let data: Vec<f64> = match group {
                ParamGroup::SigmaHead => vec![0.0; r * c],
                ParamGroup::Latent => (0..r * c)
                    .map(|_| to_f32_grid(normal.sample(&mut rng)))
                    .collect(),
                _ => {
                    let bound = 1.0 / fan_in[i].sqrt();
                    (0..r * c)
                        .map(|_| to_f32_grid(rng.random_range(-bound..bound)))
                        .collect()
                }
            };
            params.add(name, r, c, data)?;
        }
        Self::from_params(config, params)
    }

    /// Wraps an existing store; names and shapes must match the declared layout.
    pub fn from_params(config: DecoderConfig, params: ParameterStore) -> Result<Self> {
        config.validate()?;
        if params.len() != PARAM_NAMES.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter arrays, found {}",
                PARAM_NAMES.len(),
                params.len()
            )));
        }
        let num_latents = params
            .id_of("latents")
            .map(|id| params.get(id).rows)
            .ok_or_else(|| Error::Checkpoint("missing latent table".into()))?;
        let shapes = param_shapes(&config, num_latents);
        let mut ids = Vec::with_capacity(PARAM_NAMES.len());
        for ((name, _), shape) in PARAM_NAMES.iter().zip(shapes) {
            let id = params
                .id_of(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))?;
            let p = params.get(id);
            if (p.rows, p.cols) != shape {
                return Err(Error::Checkpoint(format!(
                    "parameter {name} has shape {}x{}, expected {}x{}",
                    p.rows, p.cols, shape.0, shape.1
                )));
            }
            ids.push(id);
        }
        let layout = Layout {
            w0_pos: ids[0],
            w0_latent: ids[1],
            b0: ids[2],
            w1: ids[3],
            b1: ids[4],
            w_sigma: ids[5],
            b_sigma: ids[6],
            w_color_feat: ids[7],
            w_color_dir: ids[8],
            b_color: ids[9],
            w_grasp: ids[10],
            b_grasp: ids[11],
            latents: ids[12],
        };
        Ok(Self {
            config,
            params,
            layout,
        })
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.config
    }

    pub fn params(&self) -> &ParameterStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterStore {
        &mut self.params
    }

    pub fn group_of(&self, id: ParamId) -> ParamGroup {
        PARAM_NAMES
            .iter()
            .find(|(n, _)| *n == self.params.get(id).name)
            .map(|(_, g)| *g)
            .expect("every parameter belongs to the declared layout")
    }

    pub fn latent_table_id(&self) -> ParamId {
        self.layout.latents
    }

    pub fn num_latents(&self) -> usize {
        self.params.get(self.layout.latents).rows
    }

    pub fn latent(&self, row: usize) -> Result<LatentCode> {
        let d = self.config.latent_dim;
        let t = &self.params.get(self.layout.latents).data;
        if row >= self.num_latents() {
            return Err(invalid(format!("latent row {row} out of range")));
        }
        LatentCode::new(t[row * d..(row + 1) * d].to_vec())
    }

    pub fn latents(&self) -> Result<Vec<LatentCode>> {
        (0..self.num_latents()).map(|r| self.latent(r)).collect()
    }

    pub fn set_latent(&mut self, row: usize, latent: &LatentCode) -> Result<()> {
        let d = self.config.latent_dim;
        if latent.dim() != d || row >= self.num_latents() {
            return Err(invalid("latent row or dimension out of range"));
        }
        let id = self.layout.latents;
        self.params.data_mut(id)[row * d..(row + 1) * d].copy_from_slice(latent.values());
        Ok(())
    }

    /// Same decoders with a fresh latent table of `rows` entries.
    pub fn with_latent_table(&self, rows: usize, latent_std: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, latent_std).map_err(|e| invalid(e.to_string()))?;
        let d = self.config.latent_dim;
        let mut params = ParameterStore::new();
        for (id, p) in self.params.iter() {
            if id == self.layout.latents {
                let data = (0..rows * d)
                    .map(|_| to_f32_grid(normal.sample(&mut rng)))
                    .collect();
                params.add(&p.name, rows, d, data)?;
            } else {
                params.add(&p.name, p.rows, p.cols, p.data.clone())?;
            }
        }
        Self::from_params(self.config, params)
    }

    pub fn param_counts(&self) -> ParamCounts {
        let mut counts = ParamCounts {
            radiance: 0,
            grasp_head: 0,
            latent_table: 0,
        };
        for (id, p) in self.params.iter() {
            let n = p.rows * p.cols;
            match self.group_of(id) {
                ParamGroup::GraspHead => counts.grasp_head += n,
                ParamGroup::Latent => counts.latent_table += n,
                _ => counts.radiance += n,
            }
        }
        counts
    }

    fn check_latent(&self, latent: &[f64]) -> Result<()> {
        if latent.len() != self.config.latent_dim {
            return Err(Error::ShapeMismatch(format!(
                "latent has {} entries, decoder expects {}",
                latent.len(),
                self.config.latent_dim
            )));
        }
        if !latent.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("latent code".into()));
        }
        Ok(())
    }

    /// Position encodings of `points`, one row each.
    pub fn encode_positions(&self, points: &[Vec3]) -> Matrix {
        let len = self.config.pos_len();
        let mut data = Vec::with_capacity(points.len() * len);
        for p in points {
            encode_into(
                p,
                self.config.coord_scale,
                self.config.pos_freqs,
                self.config.include_input,
                &mut data,
            );
        }
        Matrix::from_vec(points.len(), len, data).unwrap()
    }

    pub fn encode_directions(&self, dirs: &[Vec3]) -> Matrix {
        let len = self.config.dir_len();
        let mut data = Vec::with_capacity(dirs.len() * len);
        for d in dirs {
            encode_into(
                d,
                1.0,
                self.config.dir_freqs,
                self.config.include_input,
                &mut data,
            );
        }
        Matrix::from_vec(dirs.len(), len, data).unwrap()
    }

    fn param_matrix(&self, id: ParamId) -> Matrix {
        let p = self.params.get(id);
        Matrix::from_vec(p.rows, p.cols, p.data.clone()).unwrap()
    }

    /// Backbone features for one latent, same kernel sequence as [`Bound::backbone`].
    fn backbone_eval(&self, latent: &[f64], pe: &Matrix) -> Matrix {
        let l = &self.layout;
        let proj = matrix::matmul(&Matrix::row(latent), &self.param_matrix(l.w0_latent));
        let t = matrix::matmul(pe, &self.param_matrix(l.w0_pos));
        let t = matrix::add_gathered(&t, &proj, &vec![0; pe.rows()]);
        let h1 = matrix::add_row(&t, &self.param_matrix(l.b0)).map(matrix::relu);
        let t = matrix::matmul(&h1, &self.param_matrix(l.w1));
        matrix::add_row(&t, &self.param_matrix(l.b1)).map(matrix::relu)
    }

    fn sigma_eval(&self, h: &Matrix) -> Matrix {
        let l = &self.layout;
        let s = matrix::matmul(h, &self.param_matrix(l.w_sigma));
        let scale = self.config.density_scale;
        matrix::add_row(&s, &self.param_matrix(l.b_sigma)).map(|x| scale * softplus(x))
    }

    fn color_eval(&self, h: &Matrix, pe_dir: &Matrix) -> Matrix {
        let l = &self.layout;
        let a = matrix::matmul(h, &self.param_matrix(l.w_color_feat));
        let b = matrix::matmul(pe_dir, &self.param_matrix(l.w_color_dir));
        let c = matrix::zip_with(&a, &b, |x, y| x + y);
        matrix::add_row(&c, &self.param_matrix(l.b_color)).map(sigmoid)
    }

    fn grasp_eval(&self, h: &Matrix) -> Matrix {
        let l = &self.layout;
        let g = matrix::matmul(h, &self.param_matrix(l.w_grasp));
        matrix::add_row(&g, &self.param_matrix(l.b_grasp))
    }

    pub fn radiance_batch(
        &self,
        latent: &[f64],
        points: &[Vec3],
        dirs: &[Vec3],
    ) -> Result<Vec<RadianceOutput>> {
        self.check_latent(latent)?;
        if points.len() != dirs.len() {
            return Err(Error::ShapeMismatch(
                "points and directions differ in length".into(),
            ));
        }
        let mut out = Vec::with_capacity(points.len());
        for (pts, ds) in points
            .chunks(INFERENCE_CHUNK)
            .zip(dirs.chunks(INFERENCE_CHUNK))
        {
            let h = self.backbone_eval(latent, &self.encode_positions(pts));
            let sigma = self.sigma_eval(&h);
            let color = self.color_eval(&h, &self.encode_directions(ds));
            for i in 0..pts.len() {
                let c = color.row_slice(i);
                out.push(RadianceOutput {
                    sigma: sigma.get(i, 0),
                    color: [c[0], c[1], c[2]],
                });
            }
        }
        Ok(out)
    }

    pub fn density_batch(&self, latent: &[f64], points: &[Vec3]) -> Result<Vec<f64>> {
        self.check_latent(latent)?;
        let mut out = Vec::with_capacity(points.len());
        for pts in points.chunks(INFERENCE_CHUNK) {
            let h = self.backbone_eval(latent, &self.encode_positions(pts));
            out.extend_from_slice(self.sigma_eval(&h).data());
        }
        Ok(out)
    }

    pub fn grasp_batch(&self, latent: &[f64], points: &[Vec3]) -> Result<Vec<GraspOutput>> {
        self.check_latent(latent)?;
        let mut out = Vec::with_capacity(points.len());
        for pts in points.chunks(INFERENCE_CHUNK) {
            let h = self.backbone_eval(latent, &self.encode_positions(pts));
            let g = self.grasp_eval(&h);
            for i in 0..pts.len() {
                let r = g.row_slice(i);
                out.push(GraspOutput {
                    score: sigmoid(r[0]),
                    approach: Vec3::new(r[1], r[2], r[3]),
                    lateral: Vec3::new(r[4], r[5], r[6]),
                });
            }
        }
        Ok(out)
    }

    /// Density and color at one object-frame point seen along `dir`.
    pub fn radiance_forward(
        &self,
        latent: &LatentCode,
        p: &Vec3,
        dir: &Vec3,
    ) -> Result<RadianceOutput> {
        Ok(self.radiance_batch(latent.values(), &[*p], &[*dir])?[0])
    }

    pub fn grasp_forward(&self, latent: &LatentCode, p: &Vec3) -> Result<GraspOutput> {
        Ok(self.grasp_batch(latent.values(), &[*p])?[0])
    }

    /// Puts the parameters on `tape`. Groups for which `trainable` returns
    /// false are recorded as constants and receive no gradient.
    pub fn bind(&self, tape: &mut Tape, trainable: impl Fn(ParamGroup) -> bool) -> Bound {
        let l = self.layout;
        let mut put = |id: ParamId| {
            if trainable(self.group_of(id)) {
                tape.param(&self.params, id)
            } else {
                tape.frozen_param(&self.params, id)
            }
        };
        Bound {
            w0_pos: put(l.w0_pos),
            w0_latent: put(l.w0_latent),
            b0: put(l.b0),
            w1: put(l.w1),
            b1: put(l.b1),
            w_sigma: put(l.w_sigma),
            b_sigma: put(l.b_sigma),
            w_color_feat: put(l.w_color_feat),
            w_color_dir: put(l.w_color_dir),
            b_color: put(l.b_color),
            w_grasp: put(l.w_grasp),
            b_grasp: put(l.b_grasp),
            latents: put(l.latents),
            density_scale: self.config.density_scale,
            latent_proj: None,
        }
    }
}

/// Model parameters recorded on a tape.
pub struct Bound {
    w0_pos: NodeId,
    w0_latent: NodeId,
    b0: NodeId,
    w1: NodeId,
    b1: NodeId,
    w_sigma: NodeId,
    b_sigma: NodeId,
    w_color_feat: NodeId,
    w_color_dir: NodeId,
    b_color: NodeId,
    w_grasp: NodeId,
    b_grasp: NodeId,
    latents: NodeId,
    density_scale: f64,
    latent_proj: Option<NodeId>,
}

impl Bound {
    pub fn latents(&self) -> NodeId {
        self.latents
    }

    /// Shared backbone features for position encodings `pe` (constant) and
    /// latent-table rows `rows`, one per encoding row.
    pub fn backbone(&mut self, tape: &mut Tape, pe: NodeId, rows: Vec<usize>) -> NodeId {
        let proj = match self.latent_proj {
            Some(p) => p,
            None => {
                let p = tape.matmul(self.latents, self.w0_latent);
                self.latent_proj = Some(p);
                p
            }
        };
        let t = tape.matmul(pe, self.w0_pos);
        let t = tape.add_gathered(t, proj, rows);
        let t = tape.add_row(t, self.b0);
        let h1 = tape.relu(t);
        let t = tape.matmul(h1, self.w1);
        let t = tape.add_row(t, self.b1);
        tape.relu(t)
    }

    /// Density column (`n×1`) from backbone features.
    pub fn sigma(&self, tape: &mut Tape, h: NodeId) -> NodeId {
        let s = tape.matmul(h, self.w_sigma);
        let s = tape.add_row(s, self.b_sigma);
        let s = tape.softplus(s);
        if self.density_scale == 1.0 {
            s
        } else {
            tape.scale(s, self.density_scale)
        }
    }

    /// Colors (`n×3`) from backbone features and direction encodings.
    pub fn color(&self, tape: &mut Tape, h: NodeId, pe_dir: NodeId) -> NodeId {
        let a = tape.matmul(h, self.w_color_feat);
        let b = tape.matmul(pe_dir, self.w_color_dir);
        let c = tape.add(a, b);
        let c = tape.add_row(c, self.b_color);
        tape.sigmoid(c)
    }

    /// `(score n×1, approach n×3, lateral n×3)`.
    pub fn grasp(&self, tape: &mut Tape, h: NodeId) -> (NodeId, NodeId, NodeId) {
        let g = tape.matmul(h, self.w_grasp);
        let g = tape.add_row(g, self.b_grasp);
        let logit = tape.slice_cols(g, 0, 1);
        let score = tape.sigmoid(logit);
        let a = tape.slice_cols(g, 1, 3);
        let b = tape.slice_cols(g, 4, 3);
        (score, a, b)
    }
}

impl RadianceField for Model {
    fn radiance(
        &self,
        object: &ObjectInstance,
        points: &[Vec3],
        dirs: &[Vec3],
    ) -> Result<Vec<RadianceOutput>> {
        self.radiance_batch(object.latent.values(), points, dirs)
    }

    fn density(&self, object: &ObjectInstance, points: &[Vec3]) -> Result<Vec<f64>> {
        self.density_batch(object.latent.values(), points)
    }
}

impl GraspField for Model {
    fn grasp(&self, object: &ObjectInstance, points: &[Vec3]) -> Result<Vec<GraspOutput>> {
        self.grasp_batch(object.latent.values(), points)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small_config() -> DecoderConfig {
        DecoderConfig {
            latent_dim: 6,
            width: 16,
            pos_freqs: 3,
            dir_freqs: 2,
            ..DecoderConfig::default()
        }
    }

    fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
        loop {
            let v = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            if v.norm() > 0.1 {
                return v.normalize();
            }
        }
    }

    #[test]
    fn default_parameter_counts() {
        let m = Model::new(DecoderConfig::default(), 1, 0.1, 0).unwrap();
        let c = m.param_counts();
        // (39+32)·64+64 + 64·64+64 + 64+1 + 64·3+15·3+3
        assert_eq!(c.radiance, 4608 + 4160 + 65 + 240);
        assert_eq!(c.grasp_head, 64 * 7 + 7);
        assert_eq!(c.latent_table, 32);
    }

    #[test]
    fn density_at_init_is_softplus_zero() {
        let m = Model::new(DecoderConfig::default(), 1, 0.1, 3).unwrap();
        let lat = m.latent(0).unwrap();
        let out = m
            .radiance_forward(&lat, &Vec3::new(0.01, -0.02, 0.03), &Vec3::z())
            .unwrap();
        assert!((out.sigma - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn density_ignores_view_direction_bitwise() {
        let m = Model::new(small_config(), 2, 0.5, 4).unwrap();
        let mut params = m.params().clone();
        // Make the density head non-trivial.
        let ws = params.id_of("sigma.weight").unwrap();
        let w: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).sin()).collect();
        params.set(ws, &w).unwrap();
        let m = Model::from_params(*m.config(), params).unwrap();
        let lat = m.latent(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = Vec3::new(0.02, 0.01, -0.03);
        for _ in 0..100 {
            let (w1, w2) = (random_unit(&mut rng), random_unit(&mut rng));
            let a = m.radiance_forward(&lat, &p, &w1).unwrap();
            let b = m.radiance_forward(&lat, &p, &w2).unwrap();
            assert_eq!(a.sigma.to_bits(), b.sigma.to_bits());
        }
    }

    #[test]
    fn score_in_open_unit_interval() {
        let m = Model::new(small_config(), 1, 1.0, 6).unwrap();
        let lat = m.latent(0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<Vec3> = (0..1000)
            .map(|_| random_unit(&mut rng) * rng.random_range(0.0..0.2))
            .collect();
        for g in m.grasp_batch(lat.values(), &pts).unwrap() {
            assert!(g.score > 0.0 && g.score < 1.0);
        }
    }

    #[test]
    fn non_finite_latent_rejected() {
        let m = Model::new(small_config(), 1, 0.1, 8).unwrap();
        let bad = vec![f64::NAN; 6];
        assert!(m
            .radiance_batch(&bad, &[Vec3::zeros()], &[Vec3::z()])
            .is_err());
        assert!(m.grasp_batch(&[0.0; 5], &[Vec3::zeros()]).is_err());
    }

    #[test]
    fn tape_forward_matches_inference_bitwise() {
        let m = Model::new(small_config(), 3, 0.3, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let pts: Vec<Vec3> = (0..20).map(|_| random_unit(&mut rng) * 0.1).collect();
        let dirs: Vec<Vec3> = (0..20).map(|_| random_unit(&mut rng)).collect();
        let mut t = Tape::new();
        let mut b = m.bind(&mut t, |_| true);
        let pe = t.constant(m.encode_positions(&pts));
        let pd = t.constant(m.encode_directions(&dirs));
        let h = b.backbone(&mut t, pe, vec![2; 20]);
        let s = b.sigma(&mut t, h);
        let c = b.color(&mut t, h, pd);
        let (g, _, _) = b.grasp(&mut t, h);
        let lat = m.latent(2).unwrap();
        let rad = m.radiance_batch(lat.values(), &pts, &dirs).unwrap();
        let gr = m.grasp_batch(lat.values(), &pts).unwrap();
        for i in 0..20 {
            assert_eq!(t.value(s).get(i, 0), rad[i].sigma);
            assert_eq!(t.value(c).row_slice(i), &rad[i].color);
            assert_eq!(t.value(g).get(i, 0), gr[i].score);
        }
    }

    #[test]
    fn latent_gradient_matches_finite_differences() {
        let mut m = Model::new(small_config(), 1, 0.5, 11).unwrap();
        let p = Vec3::new(0.03, -0.01, 0.02);
        let w = Vec3::new(0.0, 0.6, 0.8);
        let objective = |m: &Model| {
            let r = m.radiance_forward(&m.latent(0).unwrap(), &p, &w).unwrap();
            r.sigma + r.color[0] - 2.0 * r.color[2]
        };
        let mut t = Tape::new();
        let mut b = m.bind(&mut t, |g| g == ParamGroup::Latent);
        let pe = t.constant(m.encode_positions(&[p]));
        let pd = t.constant(m.encode_directions(&[w]));
        let h = b.backbone(&mut t, pe, vec![0]);
        let s = b.sigma(&mut t, h);
        let c = b.color(&mut t, h, pd);
        let k = t.constant(Matrix::from_vec(1, 3, vec![1.0, 0.0, -2.0]).unwrap());
        let ck = t.mul(c, k);
        let cs = t.sum_all(ck);
        let ss = t.sum_all(s);
        let loss = t.add(ss, cs);
        let grads = t.backward(loss, m.params()).unwrap();
        let id = m.latent_table_id();
        let g = grads.get(id).to_vec();
        for k in 0..6 {
            let orig = m.params().get(id).data[k];
            m.params_mut().data_mut(id)[k] = orig + 1e-4;
            let lp = objective(&m);
            m.params_mut().data_mut(id)[k] = orig - 1e-4;
            let lm = objective(&m);
            m.params_mut().data_mut(id)[k] = orig;
            let fd = (lp - lm) / 2e-4;
            assert!(
                (fd - g[k]).abs() <= 1e-3 * fd.abs().max(g[k].abs()).max(1e-6),
                "{fd} vs {}",
                g[k]
            );
        }
        // Only the latent group was trainable.
        let w0 = m.params().id_of("backbone.0.weight_pos").unwrap();
        assert!(grads.get(w0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn initialization_is_seeded_and_f32_exact() {
        let a = Model::new(small_config(), 2, 0.1, 12).unwrap();
        let b = Model::new(small_config(), 2, 0.1, 12).unwrap();
        let c = Model::new(small_config(), 2, 0.1, 13).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        for (_, p) in a.params().iter() {
            assert!(p.data.iter().all(|&v| (v as f32) as f64 == v));
        }
    }
}
