//! Python bindings for `qspike`.
//!
//! Reports come back as plain dicts built from their JSON form.

#[pyo3::pymodule]
mod pyqspike {
    use pyo3::exceptions::{PyRuntimeError, PyValueError};
    use pyo3::prelude::*;
    use qspike::energy::{self, CutoffSpec, QuadOptions};
    use qspike::geometry::{self, CurvatureTensor};
    use qspike::groundstate::{self, RadialGrid, RadialProfile};
    use qspike::params::{self, ProblemParams};
    use qspike::reduction::{self, ChartField, ExtremumKind};
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn value_err(e: impl std::fmt::Display) -> PyErr {
        PyValueError::new_err(e.to_string())
    }

    fn runtime_err(e: impl std::fmt::Display) -> PyErr {
        PyRuntimeError::new_err(e.to_string())
    }

    fn to_dict<'py>(py: Python<'py>, v: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
        let text = serde_json::to_string(v).map_err(runtime_err)?;
        py.import("json")?.call_method1("loads", (text,))
    }

    fn kind(s: &str) -> PyResult<ExtremumKind> {
        match s {
            "max" => Ok(ExtremumKind::Max),
            "min" => Ok(ExtremumKind::Min),
            _ => Err(PyValueError::new_err(format!("kind must be 'max' or 'min', got {s:?}"))),
        }
    }

    fn cutoff(chart_radius: f64) -> PyResult<CutoffSpec> {
        CutoffSpec::new(chart_radius).map_err(value_err)
    }

    /// Exponent and coefficients of `Δ²U − bΔU + aU = U^p` on `R^n`.
    #[pyclass(name = "Params", frozen)]
    struct Params(ProblemParams);

    #[pymethods]
    impl Params {
        #[new]
        #[pyo3(signature = (n=5, p=1.5, a=1.0, b=3.0))]
        fn new(n: usize, p: f64, a: f64, b: f64) -> PyResult<Self> {
            ProblemParams::new(n, p, a, b).map(Params).map_err(value_err)
        }

        #[getter]
        fn n(&self) -> usize {
            self.0.n
        }

        #[getter]
        fn p(&self) -> f64 {
            self.0.p
        }

        #[getter]
        fn a(&self) -> f64 {
            self.0.a
        }

        #[getter]
        fn b(&self) -> f64 {
            self.0.b
        }

        fn critical_exponent(&self) -> f64 {
            self.0.critical_exponent()
        }

        /// Roots of the factored symbol and the slow decay rate.
        fn roots<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
            to_dict(py, &self.0.roots())
        }

        fn __repr__(&self) -> String {
            let p = self.0;
            format!("Params(n={}, p={}, a={}, b={})", p.n, p.p, p.a, p.b)
        }
    }

    /// Radial ground state on a uniform grid.
    #[pyclass(name = "GroundState", frozen)]
    struct GroundState(RadialProfile);

    #[pymethods]
    impl GroundState {
        #[new]
        #[pyo3(signature = (params, h=0.05, tol=1e-9))]
        fn new(py: Python<'_>, params: &Params, h: f64, tol: f64) -> PyResult<Self> {
            let p = params.0;
            let grid = RadialGrid::for_params(&p, h).map_err(value_err)?;
            py.detach(|| groundstate::solve_ground_state(p, grid, tol))
                .map(GroundState)
                .map_err(runtime_err)
        }

        #[getter]
        fn r(&self) -> Vec<f64> {
            self.0.grid.nodes.clone()
        }

        #[getter]
        fn u(&self) -> Vec<f64> {
            self.0.u.clone()
        }

        #[getter]
        fn residual(&self) -> f64 {
            self.0.residual
        }

        #[getter]
        fn decay_rate(&self) -> f64 {
            self.0.decay_rate
        }

        #[getter]
        fn nehari_gap(&self) -> f64 {
            self.0.nehari_gap
        }

        /// `U(r)` from the profile interpolant.
        fn value(&self, r: f64) -> f64 {
            self.0.interpolant().eval(r).u
        }

        fn potential_integral(&self) -> f64 {
            self.0.potential_integral()
        }

        fn alpha(&self) -> f64 {
            energy::alpha(&self.0)
        }

        fn beta(&self) -> f64 {
            energy::beta(&self.0)
        }

        /// Lowest `k` eigenvalues of the linearization in angular mode `ell`.
        #[pyo3(signature = (ell, k=6))]
        fn spectrum<'py>(&self, py: Python<'py>, ell: usize, k: usize) -> PyResult<Bound<'py, PyAny>> {
            let rep = py
                .detach(|| groundstate::linearized_spectrum(&self.0, ell, k))
                .map_err(runtime_err)?;
            to_dict(py, &rep)
        }
    }

    /// Second derivatives `∂_k∂_l g^{ij}(0)` of the inverse metric.
    #[pyclass(name = "MetricJet", frozen)]
    struct MetricJet(geometry::MetricJet);

    #[pymethods]
    impl MetricJet {
        #[staticmethod]
        fn zeros(n: usize) -> Self {
            MetricJet(geometry::MetricJet::zeros(n))
        }

        /// Random jet with `τ = σ`.
        #[staticmethod]
        #[pyo3(signature = (n, scale=1.0, seed=1))]
        fn random_compatible(n: usize, scale: f64, seed: u64) -> Self {
            let mut rng = StdRng::seed_from_u64(seed);
            MetricJet(geometry::MetricJet::random_compatible(n, scale, &mut rng))
        }

        /// Normal-coordinate jet of a random algebraic curvature tensor.
        #[staticmethod]
        #[pyo3(signature = (n, scale=2e-4, seed=1))]
        fn from_random_curvature(n: usize, scale: f64, seed: u64) -> PyResult<Self> {
            let r = CurvatureTensor::random(n, scale, &mut StdRng::seed_from_u64(seed));
            geometry::jet_from_curvature(&r).map(MetricJet).map_err(value_err)
        }

        #[staticmethod]
        #[pyo3(signature = (text, symmetrize=false))]
        fn from_json(text: &str, symmetrize: bool) -> PyResult<Self> {
            geometry::MetricJet::from_json(text, symmetrize)
                .map(|(j, _)| MetricJet(j))
                .map_err(value_err)
        }

        fn to_json(&self) -> String {
            self.0.to_json()
        }

        #[getter]
        fn n(&self) -> usize {
            self.0.n
        }

        fn get(&self, i: usize, j: usize, k: usize, l: usize) -> PyResult<f64> {
            let n = self.0.n;
            if [i, j, k, l].iter().any(|x| *x >= n) {
                return Err(PyValueError::new_err(format!("index out of range for n = {n}")));
            }
            Ok(self.0.get(i, j, k, l))
        }

        fn tau(&self) -> f64 {
            geometry::tau(&self.0)
        }

        fn sigma(&self) -> f64 {
            self.0.sigma()
        }

        fn ricci_flat_compatible(&self) -> bool {
            self.0.ricci_flat_compatible()
        }
    }

    #[pyfunction]
    #[pyo3(signature = (n, m, lambda0=1.0))]
    fn derive_constants<'py>(py: Python<'py>, n: usize, m: usize, lambda0: f64) -> PyResult<Bound<'py, PyAny>> {
        let c = params::derive_constants(n, m, lambda0).map_err(value_err)?;
        to_dict(py, &c)
    }

    #[pyfunction]
    fn tau(jet: &MetricJet) -> f64 {
        geometry::tau(&jet.0)
    }

    /// `∫_{S^{n−1}} θ₁^{e1} θ₂^{e2}`.
    #[pyfunction]
    fn angular_moment(n: usize, e1: usize, e2: usize) -> f64 {
        geometry::angular_moment(n, e1, e2)
    }

    /// Fits `J_ε = α + c₂ε² + c₄ε⁴` over a decreasing ε grid.
    #[pyfunction]
    #[pyo3(signature = (ground, jet, eps=vec![0.2, 0.1, 0.05, 0.025], chart_radius=10.0))]
    fn expansion_fit<'py>(
        py: Python<'py>,
        ground: &GroundState,
        jet: &MetricJet,
        eps: Vec<f64>,
        chart_radius: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let cut = cutoff(chart_radius)?;
        let rep = py
            .detach(|| energy::expansion_fit(&ground.0, &jet.0, &eps, cut, QuadOptions::default()))
            .map_err(runtime_err)?;
        to_dict(py, &rep)
    }

    /// Concentration sweep on a synthetic bump of `τ` over a plane grid.
    #[pyfunction]
    #[pyo3(signature = (ground, side=11, spacing=0.1, amplitude=1e-3, eps=vec![0.2, 0.1, 0.05], kind="max", chart_radius=10.0))]
    #[allow(clippy::too_many_arguments)]
    fn reduce_bump<'py>(
        py: Python<'py>,
        ground: &GroundState,
        side: usize,
        spacing: f64,
        amplitude: f64,
        eps: Vec<f64>,
        kind: &str,
        chart_radius: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let k = self::kind(kind)?;
        let cut = cutoff(chart_radius)?;
        let n = ground.0.params.n;
        let flipped = k == ExtremumKind::Min;
        let field = ChartField::synthetic_bump(n, side, spacing, amplitude, flipped, chart_radius)
            .map_err(value_err)?;
        let rep = py
            .detach(|| reduction::concentration_sweep(&field, &ground.0, &eps, k, cut, QuadOptions::default()))
            .map_err(runtime_err)?;
        to_dict(py, &rep)
    }
}
