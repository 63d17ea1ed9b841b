//! Electronic Hamiltonian in the site, exciton and rotating-frame dressed
//! bases.
//!
//! Level index 0 is always the electronic ground state |G⟩; levels
//! `1..=M` are the single-excitation states. Overlap tensors
//! `a_kk'(n) = C_kn C_k'n` are indexed by site `n` in `0..M` (site `n + 1`).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::units::angular;

/// How the transition dipoles of a [`SiteBasisModel`] are given.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DipoleBasis {
    /// One scalar dipole per site, rotated into the exciton basis with C⁽¹⁾
    /// (parallel transition dipoles).
    Site,
    /// One scalar dipole μ_k0 per exciton state, used as given.
    #[default]
    Exciton,
}

/// Frenkel-exciton Hamiltonian in the site basis.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteBasisModel {
    ground_energy: f64,
    site_energies: Vec<f64>,
    couplings: DMatrix<f64>,
    dipoles: Vec<f64>,
    dipole_basis: DipoleBasis,
}

impl SiteBasisModel {
    pub fn new(
        ground_energy: f64,
        site_energies: Vec<f64>,
        couplings: DMatrix<f64>,
        dipoles: Vec<f64>,
        dipole_basis: DipoleBasis,
    ) -> Result<Self> {
        let m = site_energies.len();
        if m == 0 {
            return Err(Error::InvalidModel("at least one site is required".into()));
        }
        if couplings.nrows() != m || couplings.ncols() != m {
            return Err(Error::InvalidModel(format!(
                "coupling matrix is {}x{}, expected {m}x{m}",
                couplings.nrows(),
                couplings.ncols()
            )));
        }
        if !dipoles.is_empty() && dipoles.len() != m {
            return Err(Error::InvalidModel(format!(
                "{} transition dipoles given for {m} sites",
                dipoles.len()
            )));
        }
        for i in 0..m {
            if couplings[(i, i)] != 0.0 {
                return Err(Error::InvalidModel(format!(
                    "coupling diagonal must be zero (J[{0}][{0}] = {1})",
                    i + 1,
                    couplings[(i, i)]
                )));
            }
            for j in 0..i {
                if couplings[(i, j)] != couplings[(j, i)] {
                    return Err(Error::InvalidModel(format!(
                        "coupling matrix not symmetric at ({}, {})",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        let all_finite = site_energies.iter().chain(dipoles.iter()).all(|x| x.is_finite())
            && couplings.iter().all(|x| x.is_finite())
            && ground_energy.is_finite();
        if !all_finite {
            return Err(Error::InvalidModel("non-finite parameter".into()));
        }
        Ok(Self { ground_energy, site_energies, couplings, dipoles, dipole_basis })
    }

    /// Dimer with a single coupling `j`, exciton-basis dipoles.
    pub fn dimer(ground_energy: f64, e1: f64, e2: f64, j: f64, dipoles: [f64; 2]) -> Result<Self> {
        let couplings = DMatrix::from_row_slice(2, 2, &[0.0, j, j, 0.0]);
        Self::new(ground_energy, vec![e1, e2], couplings, dipoles.to_vec(), DipoleBasis::Exciton)
    }

    pub fn num_sites(&self) -> usize {
        self.site_energies.len()
    }

    pub fn ground_energy(&self) -> f64 {
        self.ground_energy
    }

    pub fn site_energies(&self) -> &[f64] {
        &self.site_energies
    }

    pub fn couplings(&self) -> &DMatrix<f64> {
        &self.couplings
    }

    pub fn dipoles(&self) -> &[f64] {
        &self.dipoles
    }

    pub fn dipole_basis(&self) -> DipoleBasis {
        self.dipole_basis
    }

    /// Single-excitation block of the electronic Hamiltonian.
    pub fn excited_hamiltonian(&self) -> DMatrix<f64> {
        let mut h = self.couplings.clone();
        for (i, e) in self.site_energies.iter().enumerate() {
            h[(i, i)] = *e;
        }
        h
    }
}

/// Overlap tensor a_kk'(n) over `levels` states and `sites` sites.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapTensor {
    levels: usize,
    sites: usize,
    data: Vec<f64>,
}

impl OverlapTensor {
    /// Builds a_kk'(n) = C_kn C_k'n from state coefficients in the site
    /// basis (rows are states, column 0 is the ground state).
    pub fn from_site_coefficients(coeffs: &DMatrix<f64>) -> Self {
        let levels = coeffs.nrows();
        let sites = coeffs.ncols() - 1;
        let mut data = vec![0.0; levels * levels * sites];
        for k in 0..levels {
            for kp in 0..levels {
                for n in 0..sites {
                    data[(k * levels + kp) * sites + n] = coeffs[(k, n + 1)] * coeffs[(kp, n + 1)];
                }
            }
        }
        Self { levels, sites, data }
    }

    #[inline]
    pub fn get(&self, k: usize, kp: usize, n: usize) -> f64 {
        self.data[(k * self.levels + kp) * self.sites + n]
    }

    /// All site components of a_kk'.
    #[inline]
    pub fn sites_of(&self, k: usize, kp: usize) -> &[f64] {
        let start = (k * self.levels + kp) * self.sites;
        &self.data[start..start + self.sites]
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn sites(&self) -> usize {
        self.sites
    }
}

/// A diagonalized electronic Hamiltonian together with everything the rate
/// formulas consume. Shared by the exciton and dressed bases.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelBasis {
    /// Eigenenergies of the (possibly rotating-frame) Hamiltonian.
    pub eigenenergies: Vec<f64>,
    /// Rows are eigenstates expressed in the exciton basis |ε_k⁽¹⁾⟩.
    pub exciton_coefficients: DMatrix<f64>,
    /// Rows are eigenstates expressed in the site basis {|G⟩, |1⟩, …}.
    pub site_coefficients: DMatrix<f64>,
    pub overlaps: OverlapTensor,
    /// Site reorganization energies λ_n.
    pub site_reorganization: Vec<f64>,
    /// Λ_k = Σ_n a_kk(n)² λ_n.
    pub reorg_shifts: Vec<f64>,
    /// ε_k − Λ_k.
    pub shifted_energies: Vec<f64>,
}

impl LevelBasis {
    fn assemble(
        eigenenergies: Vec<f64>,
        exciton_coefficients: DMatrix<f64>,
        site_coefficients: DMatrix<f64>,
        site_reorganization: &[f64],
    ) -> Self {
        let overlaps = OverlapTensor::from_site_coefficients(&site_coefficients);
        let levels = eigenenergies.len();
        let reorg_shifts: Vec<f64> = (0..levels)
            .map(|k| {
                overlaps
                    .sites_of(k, k)
                    .iter()
                    .zip(site_reorganization)
                    .map(|(a, l)| a * a * l)
                    .sum()
            })
            .collect();
        let shifted_energies = eigenenergies.iter().zip(&reorg_shifts).map(|(e, l)| e - l).collect();
        Self {
            eigenenergies,
            exciton_coefficients,
            site_coefficients,
            overlaps,
            site_reorganization: site_reorganization.to_vec(),
            reorg_shifts,
            shifted_energies,
        }
    }

    /// Number of electronic levels (M + 1).
    pub fn levels(&self) -> usize {
        self.eigenenergies.len()
    }

    pub fn num_sites(&self) -> usize {
        self.levels() - 1
    }

    /// Eigenstate `k` as a ket in exciton coordinates.
    pub fn ket(&self, k: usize) -> DVector<Complex64> {
        DVector::from_iterator(
            self.levels(),
            self.exciton_coefficients.row(k).iter().map(|&c| Complex64::new(c, 0.0)),
        )
    }
}

/// Eigenbasis of the field-free Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcitonBasis {
    levels: LevelBasis,
    dipoles: Vec<f64>,
}

impl ExcitonBasis {
    pub fn levels(&self) -> &LevelBasis {
        &self.levels
    }

    pub fn eigenenergies(&self) -> &[f64] {
        &self.levels.eigenenergies
    }

    /// C⁽¹⁾: rows are exciton states in the site basis.
    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.levels.site_coefficients
    }

    pub fn overlaps(&self) -> &OverlapTensor {
        &self.levels.overlaps
    }

    pub fn reorg_shifts(&self) -> &[f64] {
        &self.levels.reorg_shifts
    }

    pub fn shifted_energies(&self) -> &[f64] {
        &self.levels.shifted_energies
    }

    /// Transition dipoles μ_k0 for k = 1..=M in Debye (empty if none given).
    pub fn transition_dipoles(&self) -> &[f64] {
        &self.dipoles
    }

    pub fn num_sites(&self) -> usize {
        self.levels.num_sites()
    }
}

/// Eigenbasis of the rotating-wave Hamiltonian during a pulse segment.
#[derive(Debug, Clone, PartialEq)]
pub struct DressedBasis {
    carrier: f64,
    couplings: Vec<f64>,
    levels: LevelBasis,
}

impl DressedBasis {
    pub fn carrier(&self) -> f64 {
        self.carrier
    }

    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    pub fn levels(&self) -> &LevelBasis {
        &self.levels
    }

    pub fn into_levels(self) -> LevelBasis {
        self.levels
    }

    pub fn eigenenergies(&self) -> &[f64] {
        &self.levels.eigenenergies
    }

    /// C⁽²⁾: rows are dressed states in the exciton basis.
    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.levels.exciton_coefficients
    }

    pub fn overlaps(&self) -> &OverlapTensor {
        &self.levels.overlaps
    }

    pub fn reorg_shifts(&self) -> &[f64] {
        &self.levels.reorg_shifts
    }

    pub fn shifted_energies(&self) -> &[f64] {
        &self.levels.shifted_energies
    }
}

/// Flips `v` so that its largest-magnitude component is positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() * (1.0 + 1e-12) {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Diagonalizes the single-excitation block; the ground state stays level 0.
///
/// `site_reorganization` holds λ_n per site and feeds Λ_k.
pub fn diagonalize_site_hamiltonian(
    model: &SiteBasisModel,
    site_reorganization: &[f64],
) -> Result<ExcitonBasis> {
    let m = model.num_sites();
    if site_reorganization.len() != m {
        return Err(Error::InvalidModel(format!(
            "{} reorganization energies for {m} sites",
            site_reorganization.len()
        )));
    }
    let eig = SymmetricEigen::new(model.excited_hamiltonian());
    let mut states: Vec<(f64, Vec<f64>, usize)> = (0..m)
        .map(|i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            fix_sign(&mut v);
            (eig.eigenvalues[i], v, i)
        })
        .collect();
    states.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(b.1[0].abs().partial_cmp(&a.1[0].abs()).unwrap())
            .then(a.2.cmp(&b.2))
    });

    let levels = m + 1;
    let mut coeffs = DMatrix::zeros(levels, levels);
    coeffs[(0, 0)] = 1.0;
    let mut energies = vec![model.ground_energy()];
    for (k, (e, v, _)) in states.iter().enumerate() {
        energies.push(*e);
        for n in 0..m {
            coeffs[(k + 1, n + 1)] = v[n];
        }
    }

    let dipoles = match model.dipole_basis() {
        DipoleBasis::Exciton => model.dipoles().to_vec(),
        DipoleBasis::Site if model.dipoles().is_empty() => Vec::new(),
        DipoleBasis::Site => (1..levels)
            .map(|k| (0..m).map(|n| coeffs[(k, n + 1)] * model.dipoles()[n]).sum())
            .collect(),
    };

    let levels = LevelBasis::assemble(
        energies,
        DMatrix::identity(levels, levels),
        coeffs,
        site_reorganization,
    );
    Ok(ExcitonBasis { levels, dipoles })
}

/// Rotating-wave Hamiltonian H_eff in exciton coordinates: the ground
/// level lifted by `carrier`, couplings `g_k` between |ε₀⟩ and |ε_k⟩.
pub fn rotating_frame_hamiltonian(basis: &ExcitonBasis, carrier: f64, couplings: &[f64]) -> DMatrix<f64> {
    let levels = basis.eigenenergies().len();
    let mut h = DMatrix::from_diagonal(&DVector::from_column_slice(basis.eigenenergies()));
    h[(0, 0)] += carrier;
    for (k, g) in couplings.iter().enumerate() {
        h[(0, k + 1)] = *g;
        h[(k + 1, 0)] = *g;
    }
    debug_assert_eq!(h.nrows(), levels);
    h
}

/// Diagonalizes the rotating-wave Hamiltonian of a pulse segment.
///
/// Dressed state `k` is the one connected to exciton level `k`: states are
/// assigned greedily by largest overlap, so `g = 0` yields C⁽²⁾ = 1.
pub fn build_dressed_basis(basis: &ExcitonBasis, carrier: f64, couplings: &[f64]) -> Result<DressedBasis> {
    let m = basis.num_sites();
    if couplings.len() != m {
        return Err(Error::InvalidPulse(format!("{} couplings for {m} excitons", couplings.len())));
    }
    if !(carrier.is_finite() && carrier >= 0.0) || couplings.iter().any(|g| !g.is_finite()) {
        return Err(Error::InvalidPulse("carrier and couplings must be finite, carrier ≥ 0".into()));
    }
    let levels = m + 1;
    let eig = SymmetricEigen::new(rotating_frame_hamiltonian(basis, carrier, couplings));

    let mut taken_state = vec![false; levels];
    let mut assigned: Vec<Option<usize>> = vec![None; levels];
    for _ in 0..levels {
        let mut best: Option<(usize, usize, f64)> = None;
        for s in (0..levels).filter(|&s| !taken_state[s]) {
            for lvl in (0..levels).filter(|&l| assigned[l].is_none()) {
                let w = eig.eigenvectors[(lvl, s)].abs();
                if best.is_none_or(|(_, _, bw)| w > bw + 1e-12) {
                    best = Some((s, lvl, w));
                }
            }
        }
        let (s, lvl, _) = best.expect("unassigned state remains");
        taken_state[s] = true;
        assigned[lvl] = Some(s);
    }

    let mut c2 = DMatrix::zeros(levels, levels);
    let mut energies = Vec::with_capacity(levels);
    for (k, s) in assigned.iter().enumerate() {
        let s = s.unwrap();
        let mut v: Vec<f64> = eig.eigenvectors.column(s).iter().copied().collect();
        fix_sign(&mut v);
        for (j, x) in v.iter().enumerate() {
            c2[(k, j)] = *x;
        }
        energies.push(eig.eigenvalues[s]);
    }
    let site = &c2 * basis.coefficients();
    let levels = LevelBasis::assemble(energies, c2, site, &basis.levels.site_reorganization);
    Ok(DressedBasis { carrier, couplings: couplings.to_vec(), levels })
}

/// Direction of a rotating-frame transform U(t) = exp[iωt |ε₀⟩⟨ε₀|].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameDirection {
    /// Rotating frame → lab frame (apply U).
    ToLab,
    /// Lab frame → rotating frame (apply U†).
    ToRotating,
}

fn frame_phase(carrier: f64, t: f64, direction: FrameDirection) -> Complex64 {
    let phi = angular(carrier) * t;
    match direction {
        FrameDirection::ToLab => Complex64::from_polar(1.0, phi),
        FrameDirection::ToRotating => Complex64::from_polar(1.0, -phi),
    }
}

/// Transforms a ket over the M + 1 levels (ground amplitude first).
pub fn frame_transform_ket(
    ket: &DVector<Complex64>,
    carrier: f64,
    t: f64,
    direction: FrameDirection,
) -> DVector<Complex64> {
    let mut out = ket.clone();
    if carrier != 0.0 && t != 0.0 {
        out[0] *= frame_phase(carrier, t, direction);
    }
    out
}

/// Transforms a density matrix: ρ → U ρ U† (or U† ρ U).
pub fn frame_transform_density(
    rho: &DMatrix<Complex64>,
    carrier: f64,
    t: f64,
    direction: FrameDirection,
) -> DMatrix<Complex64> {
    let mut out = rho.clone();
    if carrier != 0.0 && t != 0.0 {
        let u = frame_phase(carrier, t, direction);
        let n = out.nrows();
        for j in 1..n {
            out[(0, j)] *= u;
            out[(j, 0)] *= u.conj();
        }
    }
    out
}
