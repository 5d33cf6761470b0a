//! Shear-building structural model and its state-space forms.
//!
//! A shear building is a chain of lumped masses connected by inter-story
//! springs and dashpots. This module assembles the mass/damping/stiffness
//! matrices from per-story properties, converts them to first-order
//! continuous form, discretizes with a second-order truncation of the matrix
//! exponential, and maps the stiffness/damping parameter vector back to
//! matrices during joint estimation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-story properties of a shear-type building.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShearBuildingSpec {
    pub n_stories: usize,
    /// Story masses [kg].
    pub masses: Vec<f64>,
    /// Inter-story stiffnesses k_i [N/m].
    pub stiffnesses: Vec<f64>,
    /// Inter-story damping coefficients c_i [N*s/m].
    pub dampings: Vec<f64>,
}

impl ShearBuildingSpec {
    pub fn new(
        masses: Vec<f64>,
        stiffnesses: Vec<f64>,
        dampings: Vec<f64>,
    ) -> Result<Self> {
        let n = masses.len();
        if n == 0 {
            return Err(Error::InvalidSpec("empty spec".into()));
        }
        if stiffnesses.len() != n || dampings.len() != n {
            return Err(Error::InvalidSpec(format!(
                "array lengths differ: masses {}, stiffnesses {}, dampings {}",
                n,
                stiffnesses.len(),
                dampings.len()
            )));
        }
        for (name, arr) in [
            ("mass", &masses),
            ("stiffness", &stiffnesses),
            ("damping", &dampings),
        ] {
            if let Some((i, &v)) = arr
                .iter()
                .enumerate()
                .find(|(_, v)| !v.is_finite() || **v <= 0.0)
            {
                return Err(Error::InvalidSpec(format!(
                    "{name}[{i}] = {v} must be strictly positive"
                )));
            }
        }
        Ok(Self {
            n_stories: n,
            masses,
            stiffnesses,
            dampings,
        })
    }

    /// The six-story structure used throughout the examples and tests.
    pub fn six_story_reference() -> Self {
        Self::new(
            vec![100.0; 6],
            vec![900.0, 900.0, 1100.0, 1100.0, 1300.0, 1300.0],
            vec![25.0, 25.0, 50.0, 50.0, 75.0, 75.0],
        )
        .expect("reference spec is valid")
    }
}

/// Dense mass, damping, and stiffness matrices of a shear chain.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrices {
    pub m: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub k: DMatrix<f64>,
}

impl SystemMatrices {
    pub fn n(&self) -> usize {
        self.m.nrows()
    }
}

/// Continuous first-order form `z_dot = A z + B u`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    /// 2n x 2n system matrix.
    pub a: DMatrix<f64>,
    /// 2n x m input distribution matrix.
    pub b: DMatrix<f64>,
    /// DOFs receiving the columns of `b`, in order.
    pub input_dofs: Vec<usize>,
}

/// Discrete-time form under zero-order hold on the input.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteStateSpace {
    pub a_d: DMatrix<f64>,
    pub b_d: DMatrix<f64>,
    pub dt: f64,
}

/// Stiffness/damping parameters ordered `[k_1..k_n, c_1..c_n]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    theta: Vec<f64>,
}

impl ParameterVector {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() || theta.len() % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "length {} is not a positive even number",
                theta.len()
            )));
        }
        if let Some((i, &v)) = theta
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v <= 0.0)
        {
            return Err(Error::InvalidParameter(format!(
                "theta[{i}] = {v} must be strictly positive"
            )));
        }
        Ok(Self { theta })
    }

    /// Extracts `[k_1..k_n, c_1..c_n]` from a spec.
    pub fn from_spec(spec: &ShearBuildingSpec) -> Self {
        let mut theta = spec.stiffnesses.clone();
        theta.extend_from_slice(&spec.dampings);
        Self { theta }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn n_stories(&self) -> usize {
        self.theta.len() / 2
    }

    pub fn stiffnesses(&self) -> &[f64] {
        &self.theta[..self.n_stories()]
    }

    pub fn dampings(&self) -> &[f64] {
        &self.theta[self.n_stories()..]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    pub fn as_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.theta)
    }

    /// Rebuilds a parameter vector from raw values, clamping each entry to
    /// `floor` from below. Used by the filter's constrained update.
    pub fn from_clamped(values: &DVector<f64>, floor: &[f64]) -> Self {
        let theta = values
            .iter()
            .zip(floor)
            .map(|(&v, &f)| v.max(f))
            .collect();
        Self { theta }
    }
}

/// Assembles the tridiagonal shear-chain pattern from per-story coefficients:
/// diagonal `x_i + x_{i+1}` (last entry `x_n`), off-diagonal `-x_{i+1}`.
fn chain_matrix(coeffs: &[f64]) -> DMatrix<f64> {
    let n = coeffs.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] += coeffs[i];
        if i + 1 < n {
            m[(i, i)] += coeffs[i + 1];
            m[(i, i + 1)] = -coeffs[i + 1];
            m[(i + 1, i)] = -coeffs[i + 1];
        }
    }
    m
}

/// Builds the M, C, K matrices of a shear chain.
pub fn build_shear_matrices(spec: &ShearBuildingSpec) -> SystemMatrices {
    let m = DMatrix::from_diagonal(&DVector::from_column_slice(&spec.masses));
    SystemMatrices {
        m,
        c: chain_matrix(&spec.dampings),
        k: chain_matrix(&spec.stiffnesses),
    }
}

/// First-order form with `A = [[0, I], [-M^-1 K, -M^-1 C]]` and
/// `B = [0; M^-1 S]` where `S` selects the loaded DOFs.
pub fn assemble_state_space(mats: &SystemMatrices, input_dofs: &[usize]) -> Result<StateSpace> {
    let n = mats.n();
    for &dof in input_dofs {
        if dof >= n {
            return Err(Error::InvalidDof { dof, n });
        }
    }
    let m_inv = invert_mass(&mats.m)?;
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    a.view_mut((0, n), (n, n)).copy_from(&DMatrix::identity(n, n));
    a.view_mut((n, 0), (n, n)).copy_from(&(-&m_inv * &mats.k));
    a.view_mut((n, n), (n, n)).copy_from(&(-&m_inv * &mats.c));

    let mut b = DMatrix::zeros(2 * n, input_dofs.len());
    for (col, &dof) in input_dofs.iter().enumerate() {
        for row in 0..n {
            b[(n + row, col)] = m_inv[(row, dof)];
        }
    }
    Ok(StateSpace {
        a,
        b,
        input_dofs: input_dofs.to_vec(),
    })
}

/// Inverts the (diagonal) mass matrix, rejecting singular ones.
pub fn invert_mass(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone().try_inverse().ok_or(Error::SingularMass)
}

/// Second-order truncation `A_d = I + dt A + dt^2/2 A^2`, `B_d = dt B`.
pub fn discretize(ss: &StateSpace, dt: f64) -> Result<DiscreteStateSpace> {
    if !(dt > 0.0) {
        return Err(Error::InvalidStep(dt));
    }
    let n2 = ss.a.nrows();
    let a2 = &ss.a * &ss.a;
    let a_d = DMatrix::identity(n2, n2) + &ss.a * dt + a2 * (dt * dt / 2.0);
    let b_d = &ss.b * dt;
    Ok(DiscreteStateSpace { a_d, b_d, dt })
}

/// Rebuilds system matrices from a parameter vector, keeping the template's
/// masses. The mass matrix never depends on theta.
pub fn matrices_from_theta(
    theta: &ParameterVector,
    template: &ShearBuildingSpec,
) -> Result<SystemMatrices> {
    if theta.len() != 2 * template.n_stories {
        return Err(Error::InvalidParameter(format!(
            "theta length {} does not match 2 x {} stories",
            theta.len(),
            template.n_stories
        )));
    }
    let spec = ShearBuildingSpec::new(
        template.masses.clone(),
        theta.stiffnesses().to_vec(),
        theta.dampings().to_vec(),
    )
    .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(build_shear_matrices(&spec))
}

/// Rebuilds only K and C from raw theta values without positivity checks.
/// The filter uses this on finite-difference perturbations, which may probe
/// slightly outside the feasible region.
pub fn kc_from_theta_unchecked(theta: &DVector<f64>, n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let k = chain_matrix(&theta.as_slice()[..n]);
    let c = chain_matrix(&theta.as_slice()[n..2 * n]);
    (k, c)
}
