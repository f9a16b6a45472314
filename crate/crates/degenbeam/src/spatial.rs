//! Conforming cubic Hermite discretization of the weighted second-order
//! space: graded meshes, class-dependent essential constraints, weighted
//! bilinear forms, discrete norms and the boundary-trace inequality checks.
//!
//! Quadrature never samples `x = 0`, so vanishing rigidity needs no
//! special-casing; accuracy near the degenerate end is controlled by mesh
//! grading instead.

use crate::gauss::GAUSS_8;
use crate::model::{AxialForceProfile, DegeneracyClass, RigidityProfile};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Graded mesh on [0, 1]: nodes `x_i = (i / n)^beta`.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub nodes: Vec<f64>,
    pub beta: f64,
}

/// Builds a graded mesh with `n` elements; `beta = 1` is uniform.
pub fn build_mesh(n: usize, beta: f64) -> Result<Mesh> {
    if n < 2 {
        return Err(Error::InvalidProfile(format!(
            "mesh needs at least 2 elements, got {n}"
        )));
    }
    if !(beta >= 1.0) {
        return Err(Error::InvalidProfile(format!(
            "grading exponent must be >= 1, got {beta}"
        )));
    }
    let nodes = (0..=n)
        .map(|i| (i as f64 / n as f64).powf(beta))
        .collect::<Vec<_>>();
    Ok(Mesh { nodes, beta })
}

impl Mesh {
    pub fn n_elements(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn element(&self, e: usize) -> (f64, f64) {
        (self.nodes[e], self.nodes[e + 1])
    }

    pub fn min_element(&self) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }
}

/// Maps nodal value/slope unknowns to free equation numbers.
///
/// The displacement at the clamped end is always constrained. The slope
/// there is constrained for the weakly degenerate and nondegenerate
/// classes; in the strongly degenerate class the second boundary operator
/// is natural (the rigidity vanishes, so the associated boundary term
/// drops from the integration by parts) and the slope stays free.
#[derive(Debug, Clone)]
pub struct DofMap {
    /// Free equation index per global dof (2 per node), `None` if constrained.
    free_of_global: Vec<Option<usize>>,
    pub n_free: usize,
    pub class: DegeneracyClass,
}

impl DofMap {
    pub fn new(n_nodes: usize, class: DegeneracyClass) -> Self {
        let clamp_slope = matches!(
            class,
            DegeneracyClass::WeaklyDegenerate | DegeneracyClass::NonDegenerate
        );
        let mut free_of_global = vec![None; 2 * n_nodes];
        let mut next = 0;
        for g in 0..2 * n_nodes {
            let constrained = g == 0 || (g == 1 && clamp_slope);
            if !constrained {
                free_of_global[g] = Some(next);
                next += 1;
            }
        }
        Self {
            free_of_global,
            n_free: next,
            class,
        }
    }

    pub fn free_index(&self, global: usize) -> Option<usize> {
        self.free_of_global[global]
    }

    /// Free index of the displacement at `x = 1`.
    pub fn end_value(&self) -> usize {
        self.free_of_global[self.free_of_global.len() - 2].unwrap()
    }

    /// Free index of the slope at `x = 1`.
    pub fn end_slope(&self) -> usize {
        self.free_of_global[self.free_of_global.len() - 1].unwrap()
    }
}

/// Hermite basis values on the reference coordinate `xi` of an element of
/// length `h`: `(N, N', N'')` rows for the four local dofs
/// (value-left, slope-left, value-right, slope-right).
fn hermite(xi: f64, h: f64) -> [[f64; 4]; 3] {
    let x2 = xi * xi;
    let x3 = x2 * xi;
    let n = [
        1.0 - 3.0 * x2 + 2.0 * x3,
        h * (xi - 2.0 * x2 + x3),
        3.0 * x2 - 2.0 * x3,
        h * (x3 - x2),
    ];
    let dn = [
        (-6.0 * xi + 6.0 * x2) / h,
        1.0 - 4.0 * xi + 3.0 * x2,
        (6.0 * xi - 6.0 * x2) / h,
        3.0 * x2 - 2.0 * xi,
    ];
    let d2n = [
        (-6.0 + 12.0 * xi) / (h * h),
        (-4.0 + 6.0 * xi) / h,
        (6.0 - 12.0 * xi) / (h * h),
        (6.0 * xi - 2.0) / h,
    ];
    [n, dn, d2n]
}

/// Discrete function space: mesh, degeneracy class, constraints, and the
/// coefficient profiles that weight the bilinear forms.
#[derive(Debug, Clone)]
pub struct Space {
    pub mesh: Mesh,
    pub dofs: DofMap,
    pub rigidity: RigidityProfile,
    pub axial: AxialForceProfile,
}

impl Space {
    pub fn new(
        mesh: Mesh,
        class: DegeneracyClass,
        rigidity: RigidityProfile,
        axial: AxialForceProfile,
    ) -> Result<Self> {
        if class == DegeneracyClass::Invalid {
            return Err(Error::Assumption(
                "cannot discretize an invalid degeneracy class".into(),
            ));
        }
        let dofs = DofMap::new(mesh.nodes.len(), class);
        Ok(Self {
            mesh,
            dofs,
            rigidity,
            axial,
        })
    }

    pub fn n_free(&self) -> usize {
        self.dofs.n_free
    }

    /// Interpolates `(f, f')` onto the nodal value/slope dofs. Constrained
    /// dofs are dropped (the caller is responsible for compatibility).
    pub fn interpolate(&self, f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64) -> DVector<f64> {
        let mut u = DVector::zeros(self.n_free());
        for (i, &x) in self.mesh.nodes.iter().enumerate() {
            if let Some(k) = self.dofs.free_index(2 * i) {
                u[k] = f(x);
            }
            if let Some(k) = self.dofs.free_index(2 * i + 1) {
                u[k] = df(x);
            }
        }
        u
    }

    /// Local coefficient quadruple of element `e` from a free-dof vector.
    fn local(&self, u: &DVector<f64>, e: usize) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (l, g) in [2 * e, 2 * e + 1, 2 * e + 2, 2 * e + 3].into_iter().enumerate() {
            if let Some(k) = self.dofs.free_index(g) {
                out[l] = u[k];
            }
        }
        out
    }

    /// Evaluates `(u, u', u'')` at a point.
    pub fn eval(&self, u: &DVector<f64>, x: f64) -> (f64, f64, f64) {
        let n = self.mesh.n_elements();
        let mut e = n - 1;
        for i in 0..n {
            if x <= self.mesh.nodes[i + 1] {
                e = i;
                break;
            }
        }
        let (a, b) = self.mesh.element(e);
        let h = b - a;
        let xi = (x - a) / h;
        let basis = hermite(xi, h);
        let loc = self.local(u, e);
        let mut out = [0.0; 3];
        for d in 0..3 {
            out[d] = (0..4).map(|l| basis[d][l] * loc[l]).sum();
        }
        (out[0], out[1], out[2])
    }

    /// Assembles the weighted forms over free dofs.
    pub fn assemble_forms(&self) -> DiscreteForms {
        let n_free = self.n_free();
        let mut mass = DMatrix::zeros(n_free, n_free);
        let mut k_sigma = DMatrix::zeros(n_free, n_free);
        let mut k_q = DMatrix::zeros(n_free, n_free);
        let mut h1 = DMatrix::zeros(n_free, n_free);
        let mut cross_x = DMatrix::zeros(n_free, n_free);

        for e in 0..self.mesh.n_elements() {
            let (a, b) = self.mesh.element(e);
            let h = b - a;
            let mut m_loc = [[0.0; 4]; 4];
            let mut ks_loc = [[0.0; 4]; 4];
            let mut kq_loc = [[0.0; 4]; 4];
            let mut h1_loc = [[0.0; 4]; 4];
            let mut cx_loc = [[0.0; 4]; 4];
            for &(xi_ref, w_ref) in GAUSS_8.iter() {
                let xi = 0.5 * (xi_ref + 1.0);
                let w = 0.5 * w_ref * h;
                let x = a + xi * h;
                let sig = self.rigidity.eval(x);
                let q = self.axial.eval(x);
                let basis = hermite(xi, h);
                for i in 0..4 {
                    for j in 0..4 {
                        m_loc[i][j] += w * basis[0][i] * basis[0][j];
                        ks_loc[i][j] += w * sig * basis[2][i] * basis[2][j];
                        kq_loc[i][j] += w * q * basis[1][i] * basis[1][j];
                        h1_loc[i][j] += w * basis[1][i] * basis[1][j];
                        cx_loc[i][j] += w * basis[0][i] * x * basis[1][j];
                    }
                }
            }
            let globals = [2 * e, 2 * e + 1, 2 * e + 2, 2 * e + 3];
            for i in 0..4 {
                let Some(gi) = self.dofs.free_index(globals[i]) else {
                    continue;
                };
                for j in 0..4 {
                    let Some(gj) = self.dofs.free_index(globals[j]) else {
                        continue;
                    };
                    mass[(gi, gj)] += m_loc[i][j];
                    k_sigma[(gi, gj)] += ks_loc[i][j];
                    k_q[(gi, gj)] += kq_loc[i][j];
                    h1[(gi, gj)] += h1_loc[i][j];
                    cross_x[(gi, gj)] += cx_loc[i][j];
                }
            }
        }

        DiscreteForms {
            mass,
            k_sigma,
            k_q,
            h1,
            cross_x,
            idx_end_value: self.dofs.end_value(),
            idx_end_slope: self.dofs.end_slope(),
        }
    }

    /// Elementwise quadrature of the squared seminorms of a discrete
    /// function. Evaluating at quadrature points keeps the large
    /// small-element stiffness entries out of the floating-point sums.
    pub fn seminorms(&self, u: &DVector<f64>) -> SemiNorms {
        let mut out = SemiNorms::default();
        for e in 0..self.mesh.n_elements() {
            let (a, b) = self.mesh.element(e);
            let h = b - a;
            let loc = self.local(u, e);
            for &(xi_ref, w_ref) in GAUSS_8.iter() {
                let xi = 0.5 * (xi_ref + 1.0);
                let w = 0.5 * w_ref * h;
                let x = a + xi * h;
                let basis = hermite(xi, h);
                let v: f64 = (0..4).map(|l| basis[0][l] * loc[l]).sum();
                let dv: f64 = (0..4).map(|l| basis[1][l] * loc[l]).sum();
                let d2v: f64 = (0..4).map(|l| basis[2][l] * loc[l]).sum();
                out.l2_sq += w * v * v;
                out.h1_sq += w * dv * dv;
                out.q_weighted_sq += w * self.axial.eval(x) * dv * dv;
                out.sigma_weighted_sq += w * self.rigidity.eval(x) * d2v * d2v;
            }
        }
        out.end_value = self.eval(u, 1.0).0;
        out.end_slope = self.eval(u, 1.0).1;
        out
    }

    /// Discrete norm selected by `which`; `kb`/`kr` enter the triple norm.
    pub fn norm_sq(&self, u: &DVector<f64>, which: NormKind, kb: f64, kr: f64) -> f64 {
        let s = self.seminorms(u);
        match which {
            NormKind::L2 => s.l2_sq,
            NormKind::WeightedH2 => s.sigma_weighted_sq + s.h1_sq + s.l2_sq,
            NormKind::Triple => {
                s.sigma_weighted_sq
                    + s.q_weighted_sq
                    + kb * s.end_value * s.end_value
                    + kr * s.end_slope * s.end_slope
            }
        }
    }
}

/// Squared seminorm pieces of a discrete function plus its end traces.
#[derive(Debug, Clone, Copy, Default)]
pub struct SemiNorms {
    pub l2_sq: f64,
    pub h1_sq: f64,
    pub q_weighted_sq: f64,
    pub sigma_weighted_sq: f64,
    pub end_value: f64,
    pub end_slope: f64,
}

/// Norm selector for [`Space::norm_sq`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    L2,
    /// `||sqrt(sigma) u''||^2 + ||u'||^2 + ||u||^2`
    WeightedH2,
    /// `||sqrt(sigma) u''||^2 + ||sqrt(q) u'||^2 + kb u(1)^2 + kr u'(1)^2`
    Triple,
}

/// Assembled bilinear forms over free dofs.
#[derive(Debug, Clone)]
pub struct DiscreteForms {
    pub mass: DMatrix<f64>,
    pub k_sigma: DMatrix<f64>,
    pub k_q: DMatrix<f64>,
    /// Unweighted first-derivative form.
    pub h1: DMatrix<f64>,
    /// Cross form `(v, x u')`, used by the Lyapunov functional.
    pub cross_x: DMatrix<f64>,
    pub idx_end_value: usize,
    pub idx_end_slope: usize,
}

impl DiscreteForms {
    pub fn n(&self) -> usize {
        self.mass.nrows()
    }

    /// Unit vector selecting the end displacement.
    pub fn end_value_vector(&self) -> DVector<f64> {
        let mut e = DVector::zeros(self.n());
        e[self.idx_end_value] = 1.0;
        e
    }

    /// Unit vector selecting the end slope.
    pub fn end_slope_vector(&self) -> DVector<f64> {
        let mut e = DVector::zeros(self.n());
        e[self.idx_end_slope] = 1.0;
        e
    }

    /// Stiffness-plus-spring form
    /// `k_sigma + k_q + kb e_b e_b' + kr e_r e_r'`, the Gram matrix of the
    /// triple norm. Positive definite on the constrained space whenever
    /// the axial force has a positive floor.
    pub fn stiffness_with_springs(&self, kb: f64, kr: f64) -> DMatrix<f64> {
        let mut k = &self.k_sigma + &self.k_q;
        k[(self.idx_end_value, self.idx_end_value)] += kb;
        k[(self.idx_end_slope, self.idx_end_slope)] += kr;
        k
    }
}

/// Residual report for the embedding and trace inequalities satisfied by
/// every constrained discrete function: `||u||^2 <= ||u'||^2`,
/// `||u'||^2 <= ||sqrt(q) u'||^2 / q0`, and the end-slope trace bound
/// `u'(1)^2 <= 2 (||sqrt(q) u'||^2 / q0 + ||sqrt(sigma) u''||^2 / (sigma(1) (2 - k_sigma)))`.
#[derive(Debug, Clone, Copy)]
pub struct HardyReport {
    pub l2_sq: f64,
    pub h1_sq: f64,
    pub q_weighted_sq: f64,
    pub sigma_weighted_sq: f64,
    pub end_slope_sq: f64,
    /// `||u'||^2 - ||u||^2`
    pub slack_embedding: f64,
    /// `||sqrt(q) u'||^2 / q0 - ||u'||^2`
    pub slack_axial: f64,
    /// trace bound minus `u'(1)^2`
    pub slack_trace: f64,
    /// magnitude used to normalize violation tolerances
    pub scale: f64,
}

impl HardyReport {
    pub fn satisfied(&self, rel_tol: f64) -> bool {
        let tol = rel_tol * self.scale;
        self.slack_embedding >= -tol && self.slack_axial >= -tol && self.slack_trace >= -tol
    }
}

/// Evaluates the embedding and trace inequality residuals for a constrained
/// discrete function. A violation beyond `1e-10` of the report scale
/// indicates an assembly bug rather than a property of the function.
pub fn hardy_checks(space: &Space, u: &DVector<f64>, k_sigma: f64) -> HardyReport {
    let s = space.seminorms(u);
    let q0 = space.axial.bounds().q0;
    let sigma1 = space.rigidity.at_one();
    let trace_bound =
        2.0 * (s.q_weighted_sq / q0 + s.sigma_weighted_sq / (sigma1 * (2.0 - k_sigma)));
    let end_slope_sq = s.end_slope * s.end_slope;
    let scale = (s.h1_sq + s.q_weighted_sq / q0 + trace_bound).max(1e-300);
    HardyReport {
        l2_sq: s.l2_sq,
        h1_sq: s.h1_sq,
        q_weighted_sq: s.q_weighted_sq,
        sigma_weighted_sq: s.sigma_weighted_sq,
        end_slope_sq,
        slack_embedding: s.h1_sq - s.l2_sq,
        slack_axial: s.q_weighted_sq / q0 - s.h1_sq,
        slack_trace: trace_bound - end_slope_sq,
        scale,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::{integrate, GAUSS_16};
    use crate::model::classify_degeneracy;

    fn space_power(alpha: f64, n: usize, beta: f64) -> Space {
        let rig = RigidityProfile::power_law(alpha).unwrap();
        let class = classify_degeneracy(&rig).class;
        Space::new(
            build_mesh(n, beta).unwrap(),
            class,
            rig,
            AxialForceProfile::constant(1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn mesh_grading() {
        let m = build_mesh(2, 1.0).unwrap();
        assert_eq!(m.nodes, vec![0.0, 0.5, 1.0]);
        let m = build_mesh(2, 2.0).unwrap();
        assert_eq!(m.nodes, vec![0.0, 0.25, 1.0]);
        let m = build_mesh(64, 2.0).unwrap();
        let expect = (1.0f64 / 64.0).powi(2);
        assert!((m.min_element() - expect).abs() < 1e-18);
        assert!(build_mesh(1, 1.0).is_err());
        assert!(build_mesh(8, 0.5).is_err());
    }

    /// Classical clamped beam element: unit rigidity on a single element of
    /// length L gives the textbook bending matrix, here checked against the
    /// closed-form entries from symbolic integration of the cubic basis.
    #[test]
    fn single_element_bending_matrix_matches_closed_form() {
        for &l in &[1.0, 0.35, 2.5] {
            let mesh = Mesh {
                nodes: vec![0.0, l],
                beta: 1.0,
            };
            // keep every dof free to compare the raw 4x4 block
            let mut space = Space::new(
                mesh,
                DegeneracyClass::StronglyDegenerate,
                RigidityProfile::constant(1.0).unwrap(),
                AxialForceProfile::constant(1.0).unwrap(),
            )
            .unwrap();
            space.dofs = DofMap {
                free_of_global: (0..4).map(Some).collect(),
                n_free: 4,
                class: DegeneracyClass::StronglyDegenerate,
            };
            let forms = space.assemble_forms();
            let c = 1.0 / (l * l * l);
            let expect = [
                [12.0, 6.0 * l, -12.0, 6.0 * l],
                [6.0 * l, 4.0 * l * l, -6.0 * l, 2.0 * l * l],
                [-12.0, -6.0 * l, 12.0, -6.0 * l],
                [6.0 * l, 2.0 * l * l, -6.0 * l, 4.0 * l * l],
            ];
            for i in 0..4 {
                for j in 0..4 {
                    let got = forms.k_sigma[(i, j)];
                    assert!(
                        (got - c * expect[i][j]).abs() < 1e-11 * c,
                        "entry ({i},{j}) = {got}, want {}",
                        c * expect[i][j]
                    );
                }
            }
            // consistency: classical consistent mass block, unit density
            let me = [
                [156.0, 22.0 * l, 54.0, -13.0 * l],
                [22.0 * l, 4.0 * l * l, 13.0 * l, -3.0 * l * l],
                [54.0, 13.0 * l, 156.0, -22.0 * l],
                [-13.0 * l, -3.0 * l * l, -22.0 * l, 4.0 * l * l],
            ];
            for i in 0..4 {
                for j in 0..4 {
                    let got = forms.mass[(i, j)];
                    let want = l / 420.0 * me[i][j];
                    assert!((got - want).abs() < 1e-13 * l, "mass ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn forms_are_symmetric_and_definite() {
        for alpha in [0.5, 1.5] {
            let space = space_power(alpha, 16, 2.0);
            let forms = space.assemble_forms();
            for m in [&forms.mass, &forms.k_sigma, &forms.k_q, &forms.h1] {
                let asym = (m - m.transpose()).abs().max();
                assert!(asym <= 1e-13 * m.abs().max());
            }
            assert!(nalgebra::linalg::Cholesky::new(forms.mass.clone()).is_some());
            let k = forms.stiffness_with_springs(1.0, 1.0);
            assert!(nalgebra::linalg::Cholesky::new(k).is_some());
            // springs also not needed: the axial floor already makes the
            // stiffness definite on the constrained space
            assert!(nalgebra::linalg::Cholesky::new(forms.stiffness_with_springs(0.0, 0.0)).is_some());
        }
    }

    /// Quadratic displacement on sigma = x, q = 1 with unit springs:
    /// integral of x * 4 = 2, integral of 4 x^2 = 4/3, u(1)^2 = 1,
    /// u'(1)^2 = 4; the triple norm is 25/3.
    #[test]
    fn triple_norm_hand_value() {
        let space = space_power(1.0, 16, 2.0);
        let u = space.interpolate(|x| x * x, |x| 2.0 * x);
        let got = space.norm_sq(&u, NormKind::Triple, 1.0, 1.0);
        assert!((got - 25.0 / 3.0).abs() < 1e-12, "got {got}");
        let zero = DVector::zeros(space.n_free());
        assert_eq!(space.norm_sq(&zero, NormKind::Triple, 1.0, 1.0), 0.0);
        assert_eq!(space.norm_sq(&zero, NormKind::L2, 1.0, 1.0), 0.0);
        assert_eq!(space.norm_sq(&zero, NormKind::WeightedH2, 1.0, 1.0), 0.0);
    }

    /// Random coefficient vectors: the assembled sigma-weighted form must
    /// agree with an independently refined quadrature of the integrand.
    #[test]
    fn bending_form_matches_refined_quadrature() {
        let space = space_power(1.0, 16, 2.0);
        let forms = space.assemble_forms();
        let mut rng = 0x243f6a88u64;
        let mut rand = || {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (rng >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for _ in 0..5 {
            let v = DVector::from_fn(space.n_free(), |_, _| rand());
            let quad_form = (&forms.k_sigma * &v).dot(&v);
            // tenfold refinement: 16-point Gauss on 10 sub-panels per element
            let mut refined = 0.0;
            for e in 0..space.mesh.n_elements() {
                let (a, b) = space.mesh.element(e);
                let h = (b - a) / 10.0;
                for s in 0..10 {
                    refined += integrate(&GAUSS_16, a + s as f64 * h, a + (s + 1) as f64 * h, |x| {
                        let (_, _, d2) = space.eval(&v, x);
                        space.rigidity.eval(x) * d2 * d2
                    });
                }
            }
            let scale = quad_form.abs().max(1.0);
            assert!(
                (quad_form - refined).abs() <= 1e-8 * scale,
                "assembled {quad_form} vs refined {refined}"
            );
        }
    }

    #[test]
    fn hardy_hand_examples() {
        // u = x on q = 1: ||u||^2 = 1/3 <= ||u'||^2 = 1
        let space = space_power(1.0, 32, 2.0);
        let u = space.interpolate(|x| x, |_| 1.0);
        let rep = hardy_checks(&space, &u, 1.0);
        assert!((rep.l2_sq - 1.0 / 3.0).abs() < 1e-12);
        assert!((rep.h1_sq - 1.0).abs() < 1e-12);
        assert!(rep.satisfied(1e-10));
        // linear u has no curvature: the trace bound is 2 (1 + 0) = 2 >= 1
        assert!((rep.slack_trace - 1.0).abs() < 1e-10);

        let zero = DVector::zeros(space.n_free());
        let rep = hardy_checks(&space, &zero, 1.0);
        assert!(rep.satisfied(1e-10));
    }

    #[test]
    fn hardy_random_constrained_functions() {
        let mut rng = 0x452821e6u64;
        let mut rand = || {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (rng >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for alpha in [0.5, 1.5] {
            let space = space_power(alpha, 16, 2.0);
            for _ in 0..100 {
                let u = DVector::from_fn(space.n_free(), |_, _| rand());
                let rep = hardy_checks(&space, &u, alpha);
                assert!(rep.satisfied(1e-10), "alpha {alpha}: {rep:?}");
            }
        }
    }

    /// The norm-equivalence constants bracket the triple/weighted ratio on
    /// random functions (unit axial force so the bracket is sharp).
    #[test]
    fn norm_equivalence_bracket() {
        let (kb, kr) = (1.0_f64, 1.0_f64);
        let space = space_power(1.0, 16, 2.0);
        let k_sigma = 1.0;
        let q0 = 1.0;
        let sigma1 = 1.0;
        let upper = 1.0 + ((kb + 2.0 * kr) / q0).max(2.0 * kr / (sigma1 * (2.0 - k_sigma)));
        let lower = 1.0 / 1.0_f64.max(3.0 / (2.0 * q0));
        let mut rng = 0x13198a2eu64;
        let mut rand = || {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (rng >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for _ in 0..100 {
            let u = DVector::from_fn(space.n_free(), |_, _| rand());
            let triple = space.norm_sq(&u, NormKind::Triple, kb, kr);
            let weighted = space.norm_sq(&u, NormKind::WeightedH2, kb, kr);
            let ratio = triple / weighted;
            assert!(ratio <= upper * (1.0 + 1e-12), "ratio {ratio} > {upper}");
            assert!(ratio >= lower * (1.0 - 1e-12), "ratio {ratio} < {lower}");
        }
    }

    #[test]
    fn refinement_convergence_of_norms() {
        // fixed smooth function: norms converge at second order or better
        let f = |x: f64| (1.5 * x).sin() * x * x;
        let df = |x: f64| 1.5 * (1.5 * x).cos() * x * x + 2.0 * x * (1.5 * x).sin();
        let mut prev_err = f64::INFINITY;
        // exact L2 norm by fine quadrature of the analytic function
        let exact = {
            let mut v = 0.0;
            for s in 0..200 {
                v += integrate(&GAUSS_16, s as f64 / 200.0, (s + 1) as f64 / 200.0, |x| {
                    f(x) * f(x)
                });
            }
            v
        };
        for n in [8, 16, 32] {
            let space = space_power(1.0, n, 2.0);
            let u = space.interpolate(f, df);
            let err = (space.norm_sq(&u, NormKind::L2, 0.0, 0.0) - exact).abs();
            assert!(err < prev_err.max(1e-14) / 3.5 || err < 1e-12);
            prev_err = err;
        }
    }

    #[test]
    fn dof_constraints_by_class() {
        let wd = DofMap::new(5, DegeneracyClass::WeaklyDegenerate);
        assert_eq!(wd.n_free, 8);
        assert!(wd.free_index(0).is_none() && wd.free_index(1).is_none());
        let sd = DofMap::new(5, DegeneracyClass::StronglyDegenerate);
        assert_eq!(sd.n_free, 9);
        assert!(sd.free_index(0).is_none() && sd.free_index(1).is_some());
        let nd = DofMap::new(5, DegeneracyClass::NonDegenerate);
        assert_eq!(nd.n_free, 8);
    }
}
