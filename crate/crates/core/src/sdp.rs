//! Gain-synthesis semidefinite program and its export in SDPA sparse format.
//!
//! The program searches `P, Gamma, Gamma~, Q, Z` (symmetric), `Y` (full) and
//! scalars `rho^2, kappa, kappa1, kappa2`, minimising `rho^2`; the gain is
//! `L = P^{-1} Y`. The weights `alpha`, `eps1`, `eps2` enter bilinearly and
//! are fixed parameters, so each branch of the disjunction on
//! `(kappa1, kappa2)` is a linear SDP. Strict inequalities use a margin.
//!
//! A constraint `C + sum_i x_i F_i >= 0` is written in SDPA form
//! `sum_i F_i x_i - F_0 >= 0` with `F_0 = -C`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::decomposition::ModeDecomposition;
use crate::error::{Error, Result};
use crate::gains::ObserverGains;
use crate::linalg::Mat;
use crate::scalar::Scalar;
use crate::system::ModeModel;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SdpParameters {
    pub alpha: f64,
    pub eps1: f64,
    pub eps2: f64,
    /// Margin turning strict inequalities into non-strict ones.
    pub margin: f64,
}

impl Default for SdpParameters {
    fn default() -> Self {
        SdpParameters { alpha: 0.5, eps1: 1.0, eps2: 1.0, margin: 1e-6 }
    }
}

/// Branches of `(kappa1 >= 1, kappa2 - kappa1 < 1) or (kappa2 <= 1, kappa1 > 1/2)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Branch {
    A,
    B,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum VarKind {
    Symmetric(usize),
    Full(usize, usize),
    Scalar,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct VarBlock {
    name: &'static str,
    kind: VarKind,
    offset: usize,
}

impl VarBlock {
    fn count(&self) -> usize {
        match self.kind {
            VarKind::Symmetric(n) => n * (n + 1) / 2,
            VarKind::Full(r, c) => r * c,
            VarKind::Scalar => 1,
        }
    }
}

/// Affine matrix expression `constant + sum_i x_i coef_i`.
#[derive(Clone, Debug)]
struct Affine<T> {
    constant: Mat<T>,
    terms: BTreeMap<usize, Mat<T>>,
}

impl<T: Scalar> Affine<T> {
    fn constant(c: Mat<T>) -> Self {
        Affine { constant: c, terms: BTreeMap::new() }
    }

    fn zeros(r: usize, c: usize) -> Self {
        Self::constant(Mat::zeros(r, c))
    }

    fn shape(&self) -> (usize, usize) {
        self.constant.shape()
    }

    fn var(block: &VarBlock) -> Self {
        match block.kind {
            VarKind::Symmetric(n) => {
                let mut e = Self::zeros(n, n);
                let mut idx = block.offset;
                for i in 0..n {
                    for j in i..n {
                        let mut m = Mat::zeros(n, n);
                        m[(i, j)] = T::one();
                        m[(j, i)] = T::one();
                        e.terms.insert(idx, m);
                        idx += 1;
                    }
                }
                e
            }
            VarKind::Full(r, c) => {
                let mut e = Self::zeros(r, c);
                let mut idx = block.offset;
                for i in 0..r {
                    for j in 0..c {
                        let mut m = Mat::zeros(r, c);
                        m[(i, j)] = T::one();
                        e.terms.insert(idx, m);
                        idx += 1;
                    }
                }
                e
            }
            VarKind::Scalar => {
                let mut e = Self::zeros(1, 1);
                e.terms.insert(block.offset, Mat::identity(1));
                e
            }
        }
    }

    /// Scalar variable times a constant matrix.
    fn scalar_times(block: &VarBlock, m: Mat<T>) -> Self {
        let mut e = Self::zeros(m.rows(), m.cols());
        e.terms.insert(block.offset, m);
        e
    }

    fn map(&self, f: impl Fn(&Mat<T>) -> Mat<T>) -> Self {
        Affine { constant: f(&self.constant), terms: self.terms.iter().map(|(&k, m)| (k, f(m))).collect() }
    }

    fn add(&self, o: &Affine<T>) -> Self {
        assert_eq!(self.shape(), o.shape(), "affine shape mismatch");
        let mut out = self.clone();
        out.constant = &out.constant + &o.constant;
        for (&k, m) in &o.terms {
            let e = out.terms.entry(k).or_insert_with(|| Mat::zeros(m.rows(), m.cols()));
            *e = &*e + m;
        }
        out
    }

    fn sub(&self, o: &Affine<T>) -> Self {
        self.add(&o.neg())
    }

    fn neg(&self) -> Self {
        self.map(|m| -m)
    }

    fn scale(&self, s: T) -> Self {
        self.map(|m| m.scale(s))
    }

    fn lmul(&self, a: &Mat<T>) -> Self {
        self.map(|m| a * m)
    }

    fn rmul(&self, a: &Mat<T>) -> Self {
        self.map(|m| m * a)
    }

    fn t(&self) -> Self {
        self.map(Mat::transpose)
    }

    /// Block matrix from a grid; `None` entries are zero blocks.
    fn grid(cells: Vec<Vec<Option<Affine<T>>>>, rows: &[usize], cols: &[usize]) -> Self {
        let mut out = Self::zeros(rows.iter().sum(), cols.iter().sum());
        let mut r0 = 0;
        for (bi, row) in cells.into_iter().enumerate() {
            let mut c0 = 0;
            for (bj, cell) in row.into_iter().enumerate() {
                if let Some(a) = cell {
                    assert_eq!(a.shape(), (rows[bi], cols[bj]), "grid block shape mismatch");
                    out.constant.set_block(r0, c0, &a.constant);
                    for (k, m) in a.terms {
                        let e = out.terms.entry(k).or_insert_with(|| Mat::zeros(out.constant.rows(), out.constant.cols()));
                        e.set_block(r0, c0, &m);
                    }
                }
                c0 += cols[bj];
            }
            r0 += rows[bi];
        }
        out
    }
}

/// One constraint block of the exported problem.
#[derive(Clone, Debug)]
pub struct SdpBlock<T> {
    pub label: String,
    pub size: usize,
    /// Diagonal (linear-programming) block.
    pub diagonal: bool,
    /// `F_0` of the SDPA form.
    pub f0: Mat<T>,
    /// `F_i` per variable index (zero-based).
    pub coefficients: BTreeMap<usize, Mat<T>>,
}

#[derive(Clone, Debug)]
pub struct SdpProblem<T> {
    pub branch: Branch,
    pub params: SdpParameters,
    pub variable_names: Vec<String>,
    pub objective: Vec<T>,
    pub blocks: Vec<SdpBlock<T>>,
    /// Labels of zero-sized constraints left out of the export.
    pub omitted: Vec<String>,
    /// Number of matrix-inequality groups of the synthesis conditions.
    pub lmi_groups: usize,
}

impl<T: Scalar> SdpProblem<T> {
    pub fn variable_count(&self) -> usize {
        self.variable_names.len()
    }

    /// Evaluates `sum_i F_i x_i - F_0` per block.
    pub fn evaluate(&self, x: &[T]) -> Vec<Mat<T>> {
        assert_eq!(x.len(), self.variable_count());
        self.blocks
            .iter()
            .map(|b| {
                let mut out = -&b.f0;
                for (&k, m) in &b.coefficients {
                    out = &out + &m.scale(x[k]);
                }
                out
            })
            .collect()
    }
}

/// Assembles the synthesis SDP of one mode for one branch.
pub fn assemble_sdp<T: Scalar>(
    mode: &ModeModel<T>,
    dec: &ModeDecomposition<T>,
    gains: &ObserverGains<T>,
    params: &SdpParameters,
    branch: Branch,
) -> Result<SdpProblem<T>> {
    if !(params.alpha >= 0.0 && params.alpha <= 1.0) || !(params.eps1 > 0.0) || !(params.eps2 > 0.0) {
        return Err(Error::Config("SDP parameters need 0 <= alpha <= 1 and eps1, eps2 > 0".into()));
    }
    let n = mode.dims().n;
    let l = mode.dims().l;
    let r = dec.z2_dim();
    let n_w = mode.noise_dim();
    let nn = 2 * l + n_w;
    let lf = mode.lipschitz;
    let (alpha, eps1, eps2, margin) =
        (T::lit(params.alpha), T::lit(params.eps1), T::lit(params.eps2), T::lit(params.margin));
    let sqrt2 = T::lit(2.0).sqrt();

    let mut offset = 0;
    let mut mk = |name: &'static str, kind: VarKind| {
        let b = VarBlock { name, kind, offset };
        offset += b.count();
        b
    };
    let vp = mk("P", VarKind::Symmetric(n));
    let vg = mk("Gamma", VarKind::Symmetric(r));
    let vgt = mk("GammaTilde", VarKind::Symmetric(n));
    let vq = mk("Q", VarKind::Symmetric(n));
    let vz = mk("Z", VarKind::Symmetric(n));
    let vy = mk("Y", VarKind::Full(n, r));
    let vrho = mk("rho2", VarKind::Scalar);
    let vk = mk("kappa", VarKind::Scalar);
    let vk1 = mk("kappa1", VarKind::Scalar);
    let vk2 = mk("kappa2", VarKind::Scalar);
    let vars = [&vp, &vg, &vgt, &vq, &vz, &vy, &vrho, &vk, &vk1, &vk2];
    let m_total = offset;
    let mut variable_names = Vec::with_capacity(m_total);
    for v in vars {
        match v.kind {
            VarKind::Symmetric(s) => {
                for i in 0..s {
                    for j in i..s {
                        variable_names.push(format!("{}[{},{}]", v.name, i + 1, j + 1));
                    }
                }
            }
            VarKind::Full(a, b) => {
                for i in 0..a {
                    for j in 0..b {
                        variable_names.push(format!("{}[{},{}]", v.name, i + 1, j + 1));
                    }
                }
            }
            VarKind::Scalar => variable_names.push(v.name.to_string()),
        }
    }

    let p = Affine::var(&vp);
    let gamma = Affine::var(&vg);
    let gamma_t = Affine::var(&vgt);
    let q = Affine::var(&vq);
    let z = Affine::var(&vz);
    let y = Affine::var(&vy);
    let i_n = Mat::identity(n);
    let kappa_i = Affine::scalar_times(&vk, i_n.clone());

    let phi = &gains.phi;
    let psi = &gains.psi;
    let c2 = &dec.c2;
    let g1m1t1 = &(&dec.g1 * &gains.m1) * &dec.t1;
    let g2m2t2 = &(&dec.g2 * &gains.m2) * &dec.t2;
    let r_mat = Mat::hstack(&[&(phi * &g1m1t1).scale(-sqrt2), &(phi * &mode.w), &g2m2t2.scale(-sqrt2)]);
    let q_mat = Mat::hstack(&[&Mat::zeros(r, l), &Mat::zeros(r, n_w), &dec.t2.scale(-sqrt2)]);
    let omega = &(c2 * &r_mat) - &q_mat;

    // (P - Y C2) Phi and -(P - Y C2) Phi Psi
    let p_minus_yc2 = p.sub(&y.rmul(c2));
    let y1 = p_minus_yc2.rmul(phi);
    let y2 = y1.rmul(psi).neg();
    let m1 = kappa_i.neg().sub(&q);
    let m2 = Affine::scalar_times(&vk, i_n.scale(-(lf * lf))).add(&p.scale(T::one() - alpha)).sub(&gamma_t);
    let m3 = kappa_i.clone();
    let nn2 = [n, n];
    let pair = |a: &Affine<T>, b: &Affine<T>, c: &Affine<T>| {
        Affine::grid(vec![vec![Some(a.clone()), Some(b.clone())], vec![Some(b.t()), Some(c.clone())]], &nn2, &nn2)
    };

    let mut lmis: Vec<(String, Affine<T>)> = vec![
        ("lmi1 [P, Y1; Y1', -kappa I - Q]".into(), pair(&p, &y1, &m1)),
        ("lmi2 [P, Y2; Y2', -kappa Lf^2 I + (1-alpha) P - GammaTilde]".into(), pair(&p, &y2, &m2)),
        ("lmi3 [P, Y1; Y1', kappa I]".into(), pair(&p, &y1, &m3)),
        ("lmi4 [P, Y2; Y2', Z]".into(), pair(&p, &y2, &z)),
        (
            "lmi5 [GammaTilde, Z; Z', Psi' Q Psi]".into(),
            pair(&gamma_t, &z, &q.lmul(&psi.transpose()).rmul(psi)),
        ),
    ];
    let i_r = Mat::identity(r);
    lmis.push((
        "lmi6 [I - Gamma, 0, 0; 0, P, Y; 0, Y', I]".into(),
        Affine::grid(
            vec![
                vec![Some(Affine::constant(i_r.clone()).sub(&gamma)), None, None],
                vec![None, Some(p.clone()), Some(y.clone())],
                vec![None, Some(y.t()), Some(Affine::constant(i_r.clone()))],
            ],
            &[r, n, r],
            &[r, n, r],
        ),
    ));

    let rt = r_mat.transpose();
    let ryo = y.rmul(&omega).lmul(&rt);
    let inv_eps = T::one() / eps1 + T::one() / eps2;
    let n11 = Affine::scalar_times(&vrho, Mat::identity(nn))
        .add(&ryo)
        .add(&ryo.t())
        .sub(&p.lmul(&rt).rmul(&r_mat))
        .sub(&gamma.add(&Affine::constant(i_r.scale(inv_eps))).lmul(&omega.transpose()).rmul(&omega));
    let pr = p.rmul(&r_mat);
    let yo = y.rmul(&omega);
    let cytr = y.t().rmul(&r_mat).lmul(&c2.transpose());
    let psit_phit = (phi * psi).transpose();
    let n21 = pr.sub(&yo).sub(&cytr).lmul(&psit_phit);
    let n31 = yo.add(&cytr).sub(&pr).lmul(&phi.transpose());
    let c2phipsi = &(c2 * phi) * psi;
    let n22 = Affine::constant(&(&c2phipsi.transpose() * &c2phipsi).scale(-eps1) - &i_n.scale(T::one() + lf * lf))
        .add(&p.scale(alpha));
    let c2phi = c2 * phi;
    let n33 = Affine::constant(&i_n - &(&c2phi.transpose() * &c2phi).scale(eps2));
    lmis.push((
        "lmi7 [N11, N21', N31'; N21, N22, 0; N31, 0, N33]".into(),
        Affine::grid(
            vec![
                vec![Some(n11), Some(n21.t()), Some(n31.t())],
                vec![Some(n21), Some(n22), None],
                vec![Some(n31), None, Some(n33)],
            ],
            &[nn, n, n],
            &[nn, n, n],
        ),
    ));
    lmis.push(("lmi8a P - kappa1 I".into(), p.sub(&Affine::scalar_times(&vk1, i_n.clone()))));
    lmis.push(("lmi8b kappa2 I - P".into(), Affine::scalar_times(&vk2, i_n.clone()).sub(&p)));
    let lmi_groups = 8;

    lmis.push(("bound P - margin I".into(), p.sub(&Affine::constant(i_n.scale(margin)))));
    lmis.push(("bound Gamma - margin I".into(), gamma.sub(&Affine::constant(i_r.scale(margin)))));
    lmis.push(("bound GammaTilde".into(), gamma_t.clone()));
    lmis.push(("bound Q".into(), q.clone()));

    let one = Affine::constant(Mat::identity(1));
    let sc = |v: &VarBlock| Affine::<T>::var(v);
    let cst = |x: T| Affine::constant(Mat::from_fn(1, 1, |_, _| x));
    let mut lp: Vec<(String, Affine<T>)> = vec![
        ("rho2 - margin".into(), sc(&vrho).sub(&cst(margin))),
        ("kappa - margin".into(), sc(&vk).sub(&cst(margin))),
        ("kappa1 - margin".into(), sc(&vk1).sub(&cst(margin))),
        ("kappa2 - margin".into(), sc(&vk2).sub(&cst(margin))),
    ];
    match branch {
        Branch::A => {
            lp.push(("kappa1 - 1".into(), sc(&vk1).sub(&one)));
            lp.push(("1 - margin - (kappa2 - kappa1)".into(), cst(T::one() - margin).sub(&sc(&vk2)).add(&sc(&vk1))));
        }
        Branch::B => {
            lp.push(("1 - kappa2".into(), one.sub(&sc(&vk2))));
            lp.push(("kappa1 - 1/2 - margin".into(), sc(&vk1).sub(&cst(T::lit(0.5) + margin))));
        }
    }

    let mut blocks = Vec::new();
    let mut omitted = Vec::new();
    for (label, a) in lmis {
        let size = a.shape().0;
        if size == 0 {
            omitted.push(label);
            continue;
        }
        blocks.push(SdpBlock {
            label,
            size,
            diagonal: false,
            f0: -&a.constant.symmetrize(),
            coefficients: a.terms.into_iter().map(|(k, m)| (k, m.symmetrize())).collect(),
        });
    }
    let mut f0 = Mat::zeros(lp.len(), lp.len());
    let mut coefficients: BTreeMap<usize, Mat<T>> = BTreeMap::new();
    let mut labels = Vec::new();
    for (i, (label, a)) in lp.into_iter().enumerate() {
        f0[(i, i)] = -a.constant[(0, 0)];
        for (k, m) in a.terms {
            let e = coefficients.entry(k).or_insert_with(|| Mat::zeros(f0.rows(), f0.cols()));
            e[(i, i)] = e[(i, i)] + m[(0, 0)];
        }
        labels.push(label);
    }
    blocks.push(SdpBlock {
        label: format!("lp [{}]", labels.join("; ")),
        size: f0.rows(),
        diagonal: true,
        f0,
        coefficients,
    });

    let mut objective = vec![T::zero(); m_total];
    objective[vrho.offset] = T::one();
    Ok(SdpProblem {
        branch,
        params: *params,
        variable_names,
        objective,
        blocks,
        omitted,
        lmi_groups,
    })
}

/// Parsed SDPA sparse file. Entries are `(matno, block, i, j, value)`, one-based.
#[derive(Clone, Debug, PartialEq)]
pub struct SdpaFile {
    pub m: usize,
    pub block_struct: Vec<i64>,
    pub c: Vec<f64>,
    pub entries: Vec<(usize, usize, usize, usize, f64)>,
}

impl<T: Scalar> SdpProblem<T> {
    /// The file content as structured data: nonzero upper-triangle entries,
    /// `F_0` first, then variables in order.
    pub fn to_sdpa(&self) -> SdpaFile {
        let block_struct = self
            .blocks
            .iter()
            .map(|b| if b.diagonal { -(b.size as i64) } else { b.size as i64 })
            .collect();
        let mut entries = Vec::new();
        let mut push = |matno: usize, bi: usize, m: &Mat<T>, diagonal: bool| {
            for i in 0..m.rows() {
                let jr = if diagonal { i..i + 1 } else { i..m.cols() };
                for j in jr {
                    let v = m[(i, j)];
                    if v != T::zero() {
                        entries.push((matno, bi + 1, i + 1, j + 1, v.as_f64()));
                    }
                }
            }
        };
        for (bi, b) in self.blocks.iter().enumerate() {
            push(0, bi, &b.f0, b.diagonal);
        }
        for k in 0..self.variable_count() {
            for (bi, b) in self.blocks.iter().enumerate() {
                if let Some(m) = b.coefficients.get(&k) {
                    push(k + 1, bi, m, b.diagonal);
                }
            }
        }
        SdpaFile {
            m: self.variable_count(),
            block_struct,
            c: self.objective.iter().map(|x| x.as_f64()).collect(),
            entries,
        }
    }

    /// SDPA sparse text with `*` comment lines describing the blocks and
    /// variables.
    pub fn write_sdpa(&self) -> String {
        let f = self.to_sdpa();
        let mut s = String::new();
        let _ = writeln!(s, "* observer gain synthesis, branch {:?}", self.branch);
        let _ = writeln!(
            s,
            "* alpha = {:e}, eps1 = {:e}, eps2 = {:e}, margin = {:e}",
            self.params.alpha, self.params.eps1, self.params.eps2, self.params.margin
        );
        let _ = writeln!(s, "* gain L = P^-1 Y; minimise rho2");
        for (i, b) in self.blocks.iter().enumerate() {
            let _ = writeln!(s, "* block {}: {}", i + 1, b.label);
        }
        for o in &self.omitted {
            let _ = writeln!(s, "* empty block omitted: {o}");
        }
        for (i, name) in self.variable_names.iter().enumerate() {
            let _ = writeln!(s, "* x{} = {}", i + 1, name);
        }
        let _ = writeln!(s, "{}", f.m);
        let _ = writeln!(s, "{}", f.block_struct.len());
        let _ = writeln!(s, "{}", f.block_struct.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(" "));
        let _ = writeln!(s, "{}", f.c.iter().map(|c| format!("{c:e}")).collect::<Vec<_>>().join(" "));
        for (m, b, i, j, v) in &f.entries {
            let _ = writeln!(s, "{m} {b} {i} {j} {v:e}");
        }
        s
    }
}

/// Parses SDPA sparse text. Lines starting with `*` or `"` are comments;
/// `,`, `{`, `}`, `(` and `)` are treated as whitespace.
pub fn parse_sdpa(text: &str) -> Result<SdpaFile> {
    let bad = |what: &str| Error::Config(format!("malformed SDPA file: {what}"));
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('*') && !l.starts_with('"'))
        .map(|l| l.replace([',', '{', '}', '(', ')'], " "));
    let m: usize = lines.next().and_then(|l| l.split_whitespace().next()?.parse().ok()).ok_or_else(|| bad("m"))?;
    let nb: usize =
        lines.next().and_then(|l| l.split_whitespace().next()?.parse().ok()).ok_or_else(|| bad("nBlocks"))?;
    let block_struct: Vec<i64> = lines
        .next()
        .ok_or_else(|| bad("blockStruct"))?
        .split_whitespace()
        .take(nb)
        .map(|t| t.parse().map_err(|_| bad("blockStruct entry")))
        .collect::<Result<_>>()?;
    if block_struct.len() != nb {
        return Err(bad("blockStruct length"));
    }
    let c: Vec<f64> = lines
        .next()
        .ok_or_else(|| bad("objective"))?
        .split_whitespace()
        .take(m)
        .map(|t| t.parse().map_err(|_| bad("objective entry")))
        .collect::<Result<_>>()?;
    if c.len() != m {
        return Err(bad("objective length"));
    }
    let mut entries = Vec::new();
    for l in lines {
        let t: Vec<&str> = l.split_whitespace().collect();
        if t.len() < 5 {
            return Err(bad("entry line"));
        }
        let p = |s: &str| s.parse::<usize>().map_err(|_| bad("entry index"));
        let v: f64 = t[4].parse().map_err(|_| bad("entry value"))?;
        let e = (p(t[0])?, p(t[1])?, p(t[2])?, p(t[3])?, v);
        if e.0 > m || e.1 == 0 || e.1 > nb {
            return Err(bad("entry out of range"));
        }
        entries.push(e);
    }
    Ok(SdpaFile { m, block_struct, c, entries })
}
