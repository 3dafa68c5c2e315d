//! Quadrature meshes: periodic trapezoid nodes for smooth curves and composite
//! Gauss-Legendre panels, geometrically graded toward corners.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::curves::{Frame, ParametrizedCurve, ReflectionSymmetry};
use crate::error::{invalid, Error, Result};
use crate::geom::{reflect_dir, Vec2};
use crate::quadrature::gauss_legendre;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradingSpec {
    /// Geometric shrink factor of consecutive panels toward a corner.
    pub sigma: f64,
    /// Number of graded panels on each side of each corner.
    pub depth: usize,
    /// Gauss-Legendre nodes per panel.
    pub order: usize,
    /// Number of quasi-uniform panels covering the whole curve.
    pub base_panels: usize,
    /// Absolute target panel length; overrides `base_panels` when set.
    #[serde(default)]
    pub base_panel_length: Option<f64>,
}

impl Default for GradingSpec {
    fn default() -> Self {
        Self { sigma: 0.5, depth: 20, order: 16, base_panels: 16, base_panel_length: None }
    }
}

impl GradingSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return Err(invalid(format!("grading ratio must lie in (0,1), got {}", self.sigma)));
        }
        if self.order < 4 {
            return Err(invalid("panel order must be at least 4"));
        }
        if self.depth < 1 || self.base_panels < 1 {
            return Err(invalid("grading depth and base panel count must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub enum MeshKind {
    UniformTrapezoid { n: usize },
    GradedPanels(GradingSpec),
}

#[derive(Clone, Debug)]
pub struct Node {
    pub t: f64,
    pub segment: usize,
    /// Arclength from the start of `segment`.
    pub s: f64,
    pub pos: Vec2,
    pub tangent: Vec2,
    pub normal: Vec2,
    pub curvature: f64,
    pub weight: f64,
    pub panel: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct Panel {
    pub segment: usize,
    pub s_start: f64,
    pub half_len: f64,
    pub order: usize,
    /// 0 for quasi-uniform panels, k for the k-th graded panel toward a corner.
    pub level: usize,
    pub first_node: usize,
    /// Panel this one is the reflection of, when built by mirroring.
    pub mirror_of: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct Mesh {
    curve: Arc<ParametrizedCurve>,
    kind: MeshKind,
    nodes: Vec<Node>,
    panels: Vec<Panel>,
    /// Node pairing per curve symmetry (same indexing as `curve.symmetries()`).
    pairings: Vec<Option<Vec<usize>>>,
    mirror_symmetry: Option<usize>,
    gauss: (Vec<f64>, Vec<f64>),
    id: u64,
}

impl Mesh {
    pub fn curve(&self) -> &Arc<ParametrizedCurve> {
        &self.curve
    }

    pub fn kind(&self) -> &MeshKind {
        &self.kind
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn panels(&self) -> &[Panel] {
        &self.panels
    }

    pub fn weights(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.weight).collect()
    }

    pub fn params(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.t).collect()
    }

    /// Content hash of node positions and weights.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.kind, MeshKind::UniformTrapezoid { .. })
    }

    /// Gauss-Legendre rule used on the panels.
    pub fn gauss_rule(&self) -> (&[f64], &[f64]) {
        (&self.gauss.0, &self.gauss.1)
    }

    /// Node pairing for symmetry `k` of the curve, if the node set is mirror-invariant.
    pub fn mirror_pairing(&self, k: usize) -> Option<&[usize]> {
        self.pairings.get(k).and_then(|p| p.as_deref())
    }

    /// Symmetry used to build the mesh by reflection.
    pub fn mirror_symmetry(&self) -> Option<usize> {
        self.mirror_symmetry
    }

    /// Position on panel `pi` at local coordinate u in [-1, 1].
    pub fn panel_point(&self, pi: usize, u: f64) -> Vec2 {
        let p = &self.panels[pi];
        match (p.mirror_of, self.mirror_symmetry) {
            (Some(src), Some(k)) => self.curve.symmetries()[k].mirror(self.panel_point(src, -u)),
            _ => self.curve.eval_segment(p.segment, p.s_start + p.half_len * (u + 1.0)).pos,
        }
    }

    /// Position and outward normal on panel `pi` at local coordinate u.
    pub fn panel_frame(&self, pi: usize, u: f64) -> (Vec2, Vec2) {
        let p = &self.panels[pi];
        match (p.mirror_of, self.mirror_symmetry) {
            (Some(src), Some(k)) => {
                let sym = &self.curve.symmetries()[k];
                let (x, n) = self.panel_frame(src, -u);
                let y = sym.mirror(x);
                (y, sym.mirror(x + n) - y)
            }
            _ => {
                let f = self.curve.eval_segment(p.segment, p.s_start + p.half_len * (u + 1.0));
                (f.pos, f.normal())
            }
        }
    }

    /// CSV with columns t,x,y,w,panel_id,level.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x,y,w,panel_id,level\n");
        for n in &self.nodes {
            let (pid, level) = match n.panel {
                Some(p) => (p as i64, self.panels[p].level as i64),
                None => (-1, 0),
            };
            let _ = writeln!(out, "{:.17e},{:.17e},{:.17e},{:.17e},{pid},{level}", n.t, n.pos.x, n.pos.y, n.weight);
        }
        out
    }

    /// Uniform: N -> 2N. Panels: depth + 4 and smooth panels halved.
    pub fn refine(&self) -> Result<Mesh> {
        match &self.kind {
            MeshKind::UniformTrapezoid { n } => build_uniform_mesh(self.curve.clone(), 2 * n),
            MeshKind::GradedPanels(spec) => {
                let mut s = *spec;
                s.depth += 4;
                s.base_panels *= 2;
                s.base_panel_length = s.base_panel_length.map(|h| h / 2.0);
                build_panel_mesh(self.curve.clone(), &s, self.mirror_symmetry)
            }
        }
    }

    fn finish(
        curve: Arc<ParametrizedCurve>,
        kind: MeshKind,
        nodes: Vec<Node>,
        panels: Vec<Panel>,
        exact: Option<(usize, Vec<usize>)>,
        gauss: (Vec<f64>, Vec<f64>),
    ) -> Result<Mesh> {
        if nodes.iter().any(|n| !(n.weight > 0.0) || !n.pos.x.is_finite() || !n.pos.y.is_finite()) {
            return Err(Error::Mesh("non-positive weight or non-finite node".into()));
        }
        let mut h = Sha256::new();
        for n in &nodes {
            h.update(n.pos.x.to_le_bytes());
            h.update(n.pos.y.to_le_bytes());
            h.update(n.weight.to_le_bytes());
        }
        let digest = h.finalize();
        let id = u64::from_le_bytes(digest[..8].try_into().unwrap());
        let mut mesh = Mesh { curve, kind, nodes, panels, pairings: vec![], mirror_symmetry: exact.as_ref().map(|e| e.0), gauss, id };
        let syms = mesh.curve.symmetries().to_vec();
        mesh.pairings = syms
            .iter()
            .enumerate()
            .map(|(k, sym)| match &exact {
                Some((e, p)) if *e == k => Some(p.clone()),
                _ => mesh.match_pairing(sym),
            })
            .collect();
        Ok(mesh)
    }

    fn match_pairing(&self, sym: &ReflectionSymmetry) -> Option<Vec<usize>> {
        let tol = 1e-12 * self.curve.total_length();
        let n = self.nodes.len();
        let mut pair = vec![usize::MAX; n];
        // nodes are ordered by parameter, so search near the expected parameter first
        let params: Vec<f64> = self.params();
        for i in 0..n {
            let target = sym.mirror(self.nodes[i].pos);
            let tm = sym.involution(self.nodes[i].t);
            let start = params.partition_point(|&t| t < tm).min(n - 1);
            let found = (0..n).map(|d| {
                let off = if d % 2 == 0 { d / 2 } else { n - 1 - d / 2 };
                (start + off) % n
            });
            let mut hit = None;
            for j in found.take(n) {
                if self.nodes[j].pos.dist(target) < tol {
                    hit = Some(j);
                    break;
                }
            }
            let j = hit?;
            if (self.nodes[j].weight - self.nodes[i].weight).abs() > 1e-12 * self.nodes[i].weight {
                return None;
            }
            pair[i] = j;
        }
        (0..n).all(|i| pair[pair[i]] == i).then_some(pair)
    }
}

fn node_from(curve: &ParametrizedCurve, segment: usize, s: f64, weight: f64, panel: Option<usize>) -> Node {
    let f = curve.eval_segment(segment, s);
    let t = ((curve.segment_start(segment) + s) / curve.total_length()).rem_euclid(1.0);
    Node { t, segment, s, pos: f.pos, tangent: f.tangent, normal: f.normal(), curvature: f.curvature, weight, panel }
}

/// N equispaced-in-arclength nodes with equal weights; smooth curves only.
pub fn build_uniform_mesh(curve: Arc<ParametrizedCurve>, n: usize) -> Result<Mesh> {
    if !curve.is_smooth() {
        return Err(Error::Mesh("curve has corners; a graded panel mesh is required".into()));
    }
    if n == 0 || n % 2 == 1 {
        return Err(invalid(format!("uniform mesh needs an even positive node count, got {n}")));
    }
    let l = curve.total_length();
    let w = l / n as f64;
    let nodes: Vec<Node> = (0..n)
        .map(|i| {
            let t = i as f64 / n as f64;
            let (k, s) = curve.locate_arclength(t * l);
            let mut nd = node_from(&curve, k, s, w, None);
            nd.t = t;
            nd
        })
        .collect();
    let mut exact = None;
    for (k, sym) in curve.symmetries().iter().enumerate() {
        let m = 2.0 * sym.fixed_t * n as f64;
        if (m - m.round()).abs() < 1e-9 {
            let m = m.round() as i64;
            let pair: Vec<usize> = (0..n as i64).map(|i| (m - i).rem_euclid(n as i64) as usize).collect();
            exact = Some((k, pair));
            break;
        }
    }
    let mut mesh = Mesh::finish(curve.clone(), MeshKind::UniformTrapezoid { n }, nodes, vec![], exact, gauss_legendre(1))?;
    mesh.mirror_symmetry = None;
    // every symmetry whose fixed point lands on the grid pairs by index arithmetic
    for (k, sym) in curve.symmetries().iter().enumerate() {
        let m = 2.0 * sym.fixed_t * n as f64;
        if (m - m.round()).abs() < 1e-9 {
            let m = m.round() as i64;
            mesh.pairings[k] = Some((0..n as i64).map(|i| (m - i).rem_euclid(n as i64) as usize).collect());
        }
    }
    Ok(mesh)
}

/// Graded composite panel mesh; the curve must have at least one corner.
pub fn build_graded_mesh(curve: Arc<ParametrizedCurve>, spec: &GradingSpec) -> Result<Mesh> {
    if curve.is_smooth() {
        return Err(Error::Mesh("graded mesh requested on a curve without corners".into()));
    }
    let mirror = (!curve.symmetries().is_empty()).then_some(0);
    build_panel_mesh(curve, spec, mirror)
}

#[derive(Clone, Debug)]
struct Piece {
    segment: usize,
    s_lo: f64,
    s_hi: f64,
    left_corner: Option<usize>,
    right_corner: Option<usize>,
}

impl Piece {
    fn len(&self) -> f64 {
        self.s_hi - self.s_lo
    }
}

/// Composite Gauss-Legendre panels, graded toward every corner. With `mirror`, one
/// half of the curve is meshed and the other half is its exact reflection.
pub fn build_panel_mesh(curve: Arc<ParametrizedCurve>, spec: &GradingSpec, mirror: Option<usize>) -> Result<Mesh> {
    spec.validate()?;
    crate::operators::clear_upper_simd();
    let l = curve.total_length();
    let nseg = curve.segments().len();
    let sym = match mirror {
        Some(k) => Some(curve.symmetries().get(k).ok_or_else(|| invalid("unknown symmetry index"))?.clone()),
        None => None,
    };

    // Breakpoints: every segment start plus both crossings of the symmetry line.
    let mut cuts: Vec<(usize, f64)> = (0..nseg).map(|k| (k, 0.0)).collect();
    if let Some(sym) = &sym {
        for t in [sym.fixed_t, sym.fixed_t + 0.5] {
            let (k, s) = curve.locate_arclength(t * l);
            let seg_len = curve.segments()[k].length();
            if s > 1e-12 * l && seg_len - s > 1e-12 * l {
                cuts.push((k, s));
            }
        }
    }
    cuts.sort_by(|a, b| (a.0, a.1).partial_cmp(&(b.0, b.1)).unwrap());
    let mut pieces = Vec::new();
    for (i, &(k, s)) in cuts.iter().enumerate() {
        let (nk, ns) = cuts[(i + 1) % cuts.len()];
        let s_hi = if nk == k && ns > s { ns } else { curve.segments()[k].length() };
        let corner_idx = |seg: usize| curve.corners().iter().position(|c| c.segment == seg);
        let left_corner = if s == 0.0 { corner_idx(k) } else { None };
        let right_corner = if nk != k || cuts.len() == 1 { corner_idx((k + 1) % nseg) } else { None };
        pieces.push(Piece { segment: k, s_lo: s, s_hi, left_corner, right_corner });
    }

    let h0 = spec.base_panel_length.unwrap_or(l / spec.base_panels as f64);
    let piece_h: Vec<f64> = pieces
        .iter()
        .map(|p| {
            let min = if p.left_corner.is_some() && p.right_corner.is_some() { 2 } else { 1 };
            let n = ((p.len() / h0 - 1e-9).ceil() as usize).max(min);
            p.len() / n as f64
        })
        .collect();
    // Both sides of a corner share the same graded-zone length.
    let mut zone = vec![f64::INFINITY; curve.corners().len()];
    for (p, h) in pieces.iter().zip(&piece_h) {
        for c in [p.left_corner, p.right_corner].into_iter().flatten() {
            zone[c] = zone[c].min(*h);
        }
    }

    let selected: Vec<usize> = match &sym {
        Some(sym) => {
            let start = sym.fixed_t * l;
            (0..pieces.len())
                .filter(|&i| {
                    let g = (curve.segment_start(pieces[i].segment) + pieces[i].s_lo - start).rem_euclid(l);
                    let g = if l - g < 1e-12 * l { 0.0 } else { g };
                    g < 0.5 * l - 1e-12 * l
                })
                .collect()
        }
        None => (0..pieces.len()).collect(),
    };

    let (gx, gw) = gauss_legendre(spec.order);
    let m = spec.depth;
    let sigma = spec.sigma;
    // (segment, s_start, half_len, level)
    let mut raw: Vec<(usize, f64, f64, usize)> = Vec::new();
    for &pi in &selected {
        let p = &pieces[pi];
        let len = p.len();
        let hl = p.left_corner.map_or(0.0, |c| zone[c]);
        let hr = p.right_corner.map_or(0.0, |c| zone[c]);
        for h in [hl, hr] {
            if h > 0.0 && h * sigma.powi(m as i32 - 1) < 1e-13 * curve.segments()[p.segment].length() {
                return Err(Error::Mesh(format!(
                    "grading depth {m} with ratio {sigma} shrinks panels below floating-point resolution"
                )));
            }
        }
        let mut br: Vec<(f64, usize)> = vec![(0.0, m)];
        if hl > 0.0 {
            for k in (1..m).rev() {
                br.push((hl * sigma.powi(k as i32), k));
            }
        }
        let mid = len - hl - hr;
        let hmid = piece_h[pi];
        if mid > 1e-12 * len {
            let nm = ((mid / hmid - 1e-9).ceil() as usize).max(1);
            if hl > 0.0 {
                br.push((hl, 0));
            }
            for k in 1..nm {
                br.push((hl + mid * k as f64 / nm as f64, 0));
            }
        }
        if hr > 0.0 {
            if len - hr > 1e-12 * len {
                br.push((len - hr, 1));
            } else {
                br.last_mut().unwrap().1 = 1;
            }
            for k in 2..=m {
                br.push((len - hr * sigma.powi(k as i32 - 1), k));
            }
        }
        br.push((len, 0));
        for w in br.windows(2) {
            let (a, b) = (w[0].0, w[1].0);
            if !(b - a > 1e-14 * len) {
                return Err(Error::Mesh("degenerate panel layout".into()));
            }
            let in_left = hl > 0.0 && b <= hl * (1.0 + 1e-12);
            let in_right = hr > 0.0 && a >= len - hr - 1e-12 * len;
            let level = if in_left || in_right { w[0].1 } else { 0 };
            raw.push((p.segment, p.s_lo + a, 0.5 * (b - a), level));
        }
    }

    struct Built {
        key: f64,
        panel: Panel,
        nodes: Vec<Node>,
        source: Option<usize>,
    }
    let mut built: Vec<Built> = Vec::new();
    for (seg, s0, hl, level) in raw {
        let nodes: Vec<Node> = gx
            .iter()
            .zip(&gw)
            .map(|(&x, &w)| node_from(&curve, seg, s0 + hl * (x + 1.0), hl * w, None))
            .collect();
        built.push(Built {
            key: (curve.segment_start(seg) + s0).rem_euclid(l),
            panel: Panel { segment: seg, s_start: s0, half_len: hl, order: spec.order, level, first_node: 0, mirror_of: None },
            nodes,
            source: None,
        });
    }
    if let Some(sym) = &sym {
        let n_half = built.len();
        for i in 0..n_half {
            let src = &built[i];
            let seg = src.panel.segment;
            let k2 = curve
                .mirror_segment(sym, seg)
                .ok_or_else(|| Error::Mesh("segmentation is not mirror-symmetric".into()))?;
            let seg_len = curve.segments()[k2].length();
            let single = nseg == 1;
            let mirror_s = |s: f64| if single { (2.0 * sym.fixed_t * l - s).rem_euclid(l) } else { seg_len - s };
            let s0 = if single {
                mirror_s(src.panel.s_start + 2.0 * src.panel.half_len)
            } else {
                seg_len - (src.panel.s_start + 2.0 * src.panel.half_len)
            };
            let nodes: Vec<Node> = src
                .nodes
                .iter()
                .rev()
                .map(|nd| {
                    let s = mirror_s(nd.s);
                    Node {
                        t: sym.involution(nd.t),
                        segment: k2,
                        s,
                        pos: sym.mirror(nd.pos),
                        tangent: -reflect_dir(nd.tangent, sym.dir),
                        normal: reflect_dir(nd.normal, sym.dir),
                        curvature: nd.curvature,
                        weight: nd.weight,
                        panel: None,
                    }
                })
                .collect();
            let panel = Panel { segment: k2, s_start: s0, mirror_of: None, ..src.panel.clone() };
            built.push(Built { key: (curve.segment_start(k2) + s0).rem_euclid(l), panel, nodes, source: Some(i) });
        }
    }
    let mut order: Vec<usize> = (0..built.len()).collect();
    order.sort_by(|&a, &b| built[a].key.partial_cmp(&built[b].key).unwrap());
    let mut new_index = vec![0usize; built.len()];
    for (new, &old) in order.iter().enumerate() {
        new_index[old] = new;
    }
    let mut nodes = Vec::new();
    let mut panels = Vec::new();
    for &old in &order {
        let b = &built[old];
        let mut panel = b.panel.clone();
        panel.first_node = nodes.len();
        panel.mirror_of = b.source.map(|s| new_index[s]);
        let pid = panels.len();
        for nd in &b.nodes {
            let mut nd = nd.clone();
            nd.panel = Some(pid);
            nodes.push(nd);
        }
        panels.push(panel);
    }
    let exact = match (&sym, mirror) {
        (Some(_), Some(k)) => {
            let p = spec.order;
            let mut pair = vec![0usize; nodes.len()];
            for (pid, panel) in panels.iter().enumerate() {
                if let Some(src) = panel.mirror_of {
                    let a = panels[src].first_node;
                    for q in 0..p {
                        let i = panel.first_node + q;
                        let j = a + p - 1 - q;
                        pair[i] = j;
                        pair[j] = i;
                    }
                }
                let _ = pid;
            }
            Some((k, pair))
        }
        _ => None,
    };
    Mesh::finish(curve, MeshKind::GradedPanels(*spec), nodes, panels, exact, (gx, gw))
}

/// Frame of a node, for callers that need the full geometric record.
pub fn node_frame(n: &Node) -> Frame {
    Frame { pos: n.pos, tangent: n.tangent, curvature: n.curvature }
}
