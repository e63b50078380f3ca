use pyo3::prelude::*;

#[pymodule(name = "degenwave")]
mod degenwave_py {
    use ::degenwave::curvature;
    use ::degenwave::diagnostics;
    use ::degenwave::evolution::{self, homogeneous_reference, State};
    use ::degenwave::grid::{Grid, GridSpec, ScalarField, Scheme};
    use ::degenwave::initial_data::{data_size_params, DataFamily};
    use ::degenwave::orchestrator::{cmd_sweep, execute, RunConfig, SweepConfig};
    use pyo3::exceptions::PyValueError;
    use pyo3::prelude::*;
    use serde::Serialize;

    fn err(e: ::degenwave::Error) -> PyErr {
        PyValueError::new_err(e.to_string())
    }

    fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
        let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
        py.import("json")?.call_method1("loads", (text,))
    }

    /// Periodic box `[0, L)^dim` with `n` points per axis and its
    /// differentiation engine.
    #[pyclass(name = "Grid", frozen)]
    struct PyGrid {
        inner: Grid,
    }

    impl PyGrid {
        fn spec(&self) -> GridSpec {
            *self.inner.spec()
        }

        fn field(&self, values: Vec<f64>) -> PyResult<ScalarField> {
            ScalarField::new(self.spec(), values).map_err(err)
        }
    }

    #[pymethods]
    impl PyGrid {
        /// `fd_order = None` selects Fourier collocation, otherwise central
        /// differences of order 4, 6 or 8.
        #[new]
        #[pyo3(signature = (dim, n, box_length, fd_order = None))]
        fn new(dim: usize, n: usize, box_length: f64, fd_order: Option<usize>) -> PyResult<Self> {
            let scheme = match fd_order {
                None => Scheme::FourierCollocation,
                Some(order) => Scheme::CentralFd { order },
            };
            let spec = GridSpec::new(dim, n, box_length, scheme).map_err(err)?;
            Ok(PyGrid {
                inner: Grid::new(spec).map_err(err)?,
            })
        }

        #[getter]
        fn dim(&self) -> usize {
            self.spec().dim
        }

        #[getter]
        fn n(&self) -> usize {
            self.spec().n
        }

        #[getter]
        fn box_length(&self) -> f64 {
            self.spec().box_length
        }

        #[getter]
        fn spacing(&self) -> f64 {
            self.spec().spacing()
        }

        fn __len__(&self) -> usize {
            self.spec().len()
        }

        /// Coordinates of every point, in storage order.
        fn coords(&self) -> Vec<Vec<f64>> {
            let spec = self.spec();
            (0..spec.len()).map(|i| spec.coords(i)[..spec.dim].to_vec()).collect()
        }

        fn derivative(&self, values: Vec<f64>, axis: usize, order: usize) -> PyResult<Vec<f64>> {
            let f = self.field(values)?;
            Ok(self.inner.derivative(&f, axis, order).map_err(err)?.into_values())
        }

        fn laplacian(&self, values: Vec<f64>) -> PyResult<Vec<f64>> {
            let f = self.field(values)?;
            Ok(self.inner.laplacian(&f).map_err(err)?.into_values())
        }

        fn integrate(&self, values: Vec<f64>) -> PyResult<f64> {
            Ok(self.inner.integrate(&self.field(values)?))
        }

        /// `(l2, linf, H^N)` norms.
        fn norms(&self, values: Vec<f64>, big_n: usize) -> PyResult<(f64, f64, f64)> {
            let n = self.inner.norms(&self.field(values)?, big_n).map_err(err)?;
            Ok((n.l2, n.linf, n.sobolev))
        }

        /// Bump data `(psi0, pi0)` of the rescaled family.
        #[pyo3(signature = (radius, amp_psi, amp_pi, lam = 1.0, center = None))]
        fn bump(
            &self,
            radius: f64,
            amp_psi: f64,
            amp_pi: f64,
            lam: f64,
            center: Option<Vec<f64>>,
        ) -> PyResult<(Vec<f64>, Vec<f64>)> {
            let data = DataFamily::Bump {
                center,
                radius,
                amp_psi,
                amp_pi,
                lambda: lam,
            }
            .build(self.spec())
            .map_err(err)?;
            Ok((data.psi0.into_values(), data.pi0.into_values()))
        }

        /// `(eps_ring, delta_ring, delta_star)` of a data pair.
        fn data_size(&self, psi0: Vec<f64>, pi0: Vec<f64>) -> PyResult<(f64, f64, f64)> {
            let data = ::degenwave::initial_data::DataPair {
                psi0: self.field(psi0)?,
                pi0: self.field(pi0)?,
                support_radius: f64::INFINITY,
                family: DataFamily::Homogeneous { psi: 0.0, pi: 0.0 },
            };
            let p = data_size_params(&self.inner, &data);
            Ok((p.eps_ring, p.delta_ring, p.delta_star))
        }

        fn __repr__(&self) -> String {
            let s = self.spec();
            format!("Grid(dim={}, n={}, box_length={}, scheme={:?})", s.dim, s.n, s.box_length, s.scheme)
        }
    }

    /// `(Ψ, ∂ₜΨ)` at time `t` for exponent `P`.
    #[pyclass(name = "State")]
    struct PyState {
        grid: Py<PyGrid>,
        inner: State,
    }

    #[pymethods]
    impl PyState {
        #[new]
        #[pyo3(signature = (grid, psi, pi, p = 1, t = 0.0))]
        fn new(grid: Py<PyGrid>, psi: Vec<f64>, pi: Vec<f64>, p: u32, t: f64) -> PyResult<Self> {
            let g = grid.get();
            let inner = State::new(t, g.field(psi)?, g.field(pi)?, p).map_err(err)?;
            Ok(PyState { grid, inner })
        }

        #[getter]
        fn t(&self) -> f64 {
            self.inner.t
        }

        #[getter]
        fn p(&self) -> u32 {
            self.inner.p
        }

        #[getter]
        fn psi(&self) -> Vec<f64> {
            self.inner.psi.values().to_vec()
        }

        #[getter]
        fn pi(&self) -> Vec<f64> {
            self.inner.pi.values().to_vec()
        }

        fn min_one_plus_psi(&self) -> f64 {
            self.inner.min_one_plus_psi()
        }

        /// One RK4 step.
        fn step(&self, py: Python<'_>, dt: f64) -> PyResult<Self> {
            let inner = evolution::step(&self.grid.get().inner, &self.inner, dt).map_err(err)?;
            Ok(PyState {
                grid: self.grid.clone_ref(py),
                inner,
            })
        }

        /// Stable step for the given CFL number.
        fn cfl_dt(&self, cfl: f64) -> f64 {
            evolution::cfl_dt(&self.inner, cfl)
        }

        fn energy<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
            let report = diagnostics::energy(&self.grid.get().inner, &self.inner).map_err(err)?;
            to_py(py, &report)
        }

        /// Pointwise Kretschmann scalar.
        fn kretschmann(&self) -> PyResult<Vec<f64>> {
            let grid = &self.grid.get().inner;
            let geo = curvature::geometry(grid, &self.inner).map_err(err)?;
            let blocks = curvature::riemann_blocks(&geo, &self.inner).map_err(err)?;
            let report = curvature::kretschmann(&blocks, &self.inner).map_err(err)?;
            Ok(report.kretschmann.into_values())
        }

        #[pyo3(signature = (locus_tol = 1e-3))]
        fn curvature_summary<'py>(&self, py: Python<'py>, locus_tol: f64) -> PyResult<Bound<'py, PyAny>> {
            let summary = curvature::summary(&self.grid.get().inner, &self.inner, locus_tol).map_err(err)?;
            to_py(py, &summary)
        }

        fn __repr__(&self) -> String {
            format!("State(t={}, P={}, min_one_plus_psi={})", self.inner.t, self.inner.p, self.inner.min_one_plus_psi())
        }
    }

    /// Runs a JSON configuration and returns the summary as a dict.
    #[pyfunction]
    #[pyo3(signature = (config, out_dir = None))]
    fn run<'py>(py: Python<'py>, config: &str, out_dir: Option<std::path::PathBuf>) -> PyResult<Bound<'py, PyAny>> {
        let cfg = RunConfig::from_json(config).map_err(err)?;
        let summary = py
            .detach(|| execute(&cfg, out_dir.as_deref(), None).map(|o| o.summary))
            .map_err(err)?;
        to_py(py, &summary)
    }

    /// λ-sweep of a JSON configuration; one dict per (λ, P) point.
    #[pyfunction]
    #[pyo3(signature = (config, lambdas, compare_p = false))]
    fn sweep<'py>(py: Python<'py>, config: &str, lambdas: Vec<f64>, compare_p: bool) -> PyResult<Bound<'py, PyAny>> {
        let base = RunConfig::from_json(config).map_err(err)?;
        let cfg = SweepConfig {
            base,
            lambdas,
            compare_p,
        };
        let rows = py.detach(|| cmd_sweep(&cfg, None)).map_err(err)?;
        to_py(py, &rows)
    }

    /// Exact `(psi, pi)` of spatially constant data at time `t`.
    #[pyfunction]
    #[pyo3(name = "homogeneous_reference")]
    fn py_homogeneous_reference(psi: f64, pi: f64, t: f64) -> (f64, f64) {
        homogeneous_reference(psi, pi, t)
    }

    #[pyfunction]
    fn leading_coefficient(p: u32) -> f64 {
        curvature::leading_coefficient(p)
    }
}
