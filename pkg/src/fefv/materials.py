"""Constitutive models: potentials, forces and moduli with composition.

Every material answers a common set of queries (potential, force, modulus,
named parameters) given a constitutive state vector. Queries a material
cannot answer raise MaterialError rather than returning a silent default.
Composite models reuse their children's answers evaluated at split states.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "MaterialError",
    "MaterialStatus",
    "DamageStatus",
    "Material",
    "LinearIsotropicElasticity",
    "QuadraticDegradation",
    "AmorDamageModel",
    "ScalarConductance",
    "Density",
    "VOL_PROJECTOR",
    "vol_dev_split",
    "plane_strain_stiffness",
    "create_material",
]


class MaterialError(Exception):
    """Invalid material construction, state or unanswerable query."""


class MaterialStatus:
    """History variables owned by one evaluation point."""

    __slots__ = ()


@dataclass
class DamageStatus(MaterialStatus):
    """Committed damage history for one evaluation point."""

    phase_field: float = 0.0
    irreversible: bool = False


# Volumetric projector for plane-strain Voigt vectors {exx, eyy, ezz, gxy}.
# It averages the in-plane normal components and zeroes everything else.
VOL_PROJECTOR = np.array([
    [0.5, 0.5, 0.0, 0.0],
    [0.5, 0.5, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0],
])


def plane_strain_stiffness(young, poisson):
    """Isotropic 4x4 plane-strain stiffness for {exx, eyy, ezz, gxy}."""
    lam = young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson))
    mu = young / (2.0 * (1.0 + poisson))
    c = np.full((4, 4), lam)
    c[3, :] = c[:, 3] = 0.0
    c[0, 0] = c[1, 1] = c[2, 2] = lam + 2.0 * mu
    c[3, 3] = mu
    return c


def vol_dev_split(strain):
    """Split a plane-strain Voigt vector into (vol+, vol-, dev) parts.

    The volumetric part is the in-plane trace spread over the xx/yy slots;
    a zero trace counts as the positive branch. The three parts sum back
    to the input exactly.
    """
    strain = _voigt(strain)
    vol = VOL_PROJECTOR @ strain
    dev = strain - vol
    if strain[0] + strain[1] >= 0.0:
        return vol, np.zeros(4), dev
    return np.zeros(4), vol, dev


def _voigt(state):
    state = np.asarray(state, dtype=float)
    if state.shape != (4,):
        raise MaterialError(
            "expected a plane-strain Voigt vector of length 4, got shape %s"
            % (state.shape,))
    return state


def _scalar(state):
    arr = np.asarray(state, dtype=float).reshape(-1)
    if arr.size != 1:
        raise MaterialError(
            "expected a scalar state, got %d components" % arr.size)
    return float(arr[0])


class Material:
    """Query interface shared by all constitutive models.

    Subclasses override the queries they can answer; everything else
    raises so that a misconfigured model set fails loudly.
    """

    def create_status(self):
        return None

    def initialize(self):
        return None

    def update_status_from(self, state, status, label=None):
        return None

    def _unanswered(self, query):
        raise MaterialError(
            "%s does not answer %s" % (type(self).__name__, query))

    def potential_from(self, state, status=None):
        self._unanswered("potential_from")

    def force_from(self, state, status=None, label=None):
        self._unanswered("force_from" if label is None
                         else "force_from(label=%r)" % label)

    def modulus_from(self, state, status=None, label=None):
        self._unanswered("modulus_from" if label is None
                         else "modulus_from(label=%r)" % label)

    def material_variable(self, label, status):
        self._unanswered("material_variable(%r)" % label)

    def parameter(self, label):
        self._unanswered("parameter(%r)" % label)


class LinearIsotropicElasticity(Material):
    """Linear isotropic elasticity in plane-strain or torsion mode.

    Plane-strain mode answers potential/force/modulus on Voigt strain
    vectors. Torsion mode holds only the shear modulus, exposed through
    the parameter query.
    """

    def __init__(self, mode, *params):
        if mode == "Torsion":
            if len(params) != 1:
                raise MaterialError(
                    "Torsion mode takes a single shear modulus, got %r"
                    % (params,))
            self.mode = mode
            self.shear_modulus = float(params[0])
            if self.shear_modulus <= 0.0:
                raise MaterialError("shear modulus must be positive")
            self.stiffness = None
        elif mode == "PlaneStrain":
            if len(params) != 2:
                raise MaterialError(
                    "PlaneStrain mode takes modulus and Poisson ratio, "
                    "got %r" % (params,))
            self.mode = mode
            self.young = float(params[0])
            self.poisson = float(params[1])
            if self.young <= 0.0:
                raise MaterialError("Young's modulus must be positive")
            if not -1.0 < self.poisson < 0.5:
                raise MaterialError(
                    "Poisson ratio %g outside (-1, 0.5)" % self.poisson)
            self.shear_modulus = self.young / (2.0 * (1.0 + self.poisson))
            self.stiffness = plane_strain_stiffness(self.young, self.poisson)
            self.stiffness.setflags(write=False)
        else:
            raise MaterialError("unknown elasticity mode %r" % (mode,))

    def _require_plane_strain(self, query):
        if self.mode != "PlaneStrain":
            raise MaterialError(
                "%s is only answered in PlaneStrain mode, this instance "
                "is %s" % (query, self.mode))

    def potential_from(self, state, status=None):
        self._require_plane_strain("potential_from")
        strain = _voigt(state)
        return 0.5 * float(strain @ self.stiffness @ strain)

    def force_from(self, state, status=None, label=None):
        self._require_plane_strain("force_from")
        return self.stiffness @ _voigt(state)

    def modulus_from(self, state, status=None, label=None):
        self._require_plane_strain("modulus_from")
        return self.stiffness

    def parameter(self, label):
        if label == "ShearModulus":
            return self.shear_modulus
        if self.mode == "PlaneStrain":
            if label == "YoungModulus":
                return self.young
            if label == "PoissonRatio":
                return self.poisson
        self._unanswered("parameter(%r)" % label)


class QuadraticDegradation(Material):
    """Degradation g(phi) = (1 - phi)^2 with its two derivatives.

    The state is the scalar phase field; potential, force and modulus
    return g, g' and g'' respectively.
    """

    def potential_from(self, state, status=None):
        phi = _scalar(state)
        return (1.0 - phi) ** 2

    def force_from(self, state, status=None, label=None):
        phi = _scalar(state)
        return -2.0 * (1.0 - phi)

    def modulus_from(self, state, status=None, label=None):
        return 2.0

    def degradation(self, phi):
        return ((1.0 - phi) ** 2, -2.0 * (1.0 - phi), 2.0)


class AmorDamageModel(Material):
    """Volumetric/deviatoric damage model built from two children.

    The state vector is {exx, eyy, ezz, gxy, phi}. Tensile volumetric and
    deviatoric energies are degraded by g(phi); compressive volumetric
    energy stays intact. Queries are answered per subsystem through the
    "Mechanics" and "PhaseField" labels.

    The mechanics modulus multiplies the children's moduli by the
    projector from the right, which leaves the out-of-plane row of the
    undamaged stiffness in place. The matrix is asymmetric but produces
    symmetric element matrices because strain-displacement operators have
    no out-of-plane row.
    """

    def __init__(self, elasticity, degradation, irreversibility_threshold=1.0):
        if elasticity is None or degradation is None:
            raise MaterialError(
                "AmorDamageModel needs elasticity and degradation children")
        if elasticity.mode != "PlaneStrain":
            raise MaterialError(
                "AmorDamageModel needs a PlaneStrain elasticity child")
        if not 0.0 < irreversibility_threshold <= 1.0:
            raise MaterialError(
                "irreversibility threshold %g outside (0, 1]"
                % irreversibility_threshold)
        self.elasticity = elasticity
        self.degradation = degradation
        self.irreversibility_threshold = float(irreversibility_threshold)

    def create_status(self):
        return DamageStatus()

    @staticmethod
    def _split_state(state):
        state = np.asarray(state, dtype=float)
        if state.shape != (5,):
            raise MaterialError(
                "expected {strain Voigt 4, phi}, got shape %s"
                % (state.shape,))
        return state[:4], float(state[4])

    def _energies(self, strain):
        vol_plus, vol_minus, dev = vol_dev_split(strain)
        tensile = (self.elasticity.potential_from(vol_plus)
                   + self.elasticity.potential_from(dev))
        compressive = self.elasticity.potential_from(vol_minus)
        return tensile, compressive

    def potential_from(self, state, status=None):
        strain, phi = self._split_state(state)
        tensile, compressive = self._energies(strain)
        g = self.degradation.potential_from(phi)
        return g * tensile + compressive

    def force_from(self, state, status=None, label=None):
        strain, phi = self._split_state(state)
        if label == "Mechanics":
            vol_plus, vol_minus, dev = vol_dev_split(strain)
            g = self.degradation.potential_from(phi)
            return (g * (self.elasticity.force_from(vol_plus)
                         + self.elasticity.force_from(dev))
                    + self.elasticity.force_from(vol_minus))
        if label == "PhaseField":
            tensile, _ = self._energies(strain)
            return self.degradation.force_from(phi) * tensile
        self._unanswered("force_from" if label is None
                         else "force_from(label=%r)" % label)

    def modulus_from(self, state, status=None, label=None):
        strain, phi = self._split_state(state)
        if label == "Mechanics":
            stiffness = self.elasticity.modulus_from(strain)
            projector = VOL_PROJECTOR
            complement = np.eye(4) - projector
            g = self.degradation.potential_from(phi)
            tension = strain[0] + strain[1] >= 0.0
            volumetric = stiffness @ projector
            deviatoric = stiffness @ complement
            if tension:
                return g * (volumetric + deviatoric)
            return g * deviatoric + volumetric
        if label == "PhaseField":
            tensile, _ = self._energies(strain)
            return self.degradation.modulus_from(phi) * tensile
        self._unanswered("modulus_from" if label is None
                         else "modulus_from(label=%r)" % label)

    def update_status_from(self, state, status, label=None):
        if not isinstance(status, DamageStatus):
            raise MaterialError(
                "status %r was not created by AmorDamageModel"
                % type(status).__name__)
        _, phi = self._split_state(state)
        status.phase_field = phi
        if phi > self.irreversibility_threshold:
            status.irreversible = True

    def material_variable(self, label, status):
        if not isinstance(status, DamageStatus):
            raise MaterialError(
                "status %r was not created by AmorDamageModel"
                % type(status).__name__)
        if label == "PhaseField":
            return status.phase_field
        if label == "Irreversible":
            return 1.0 if status.irreversible else 0.0
        self._unanswered("material_variable(%r)" % label)

    def parameter(self, label):
        if label == "IrreversibilityThreshold":
            return self.irreversibility_threshold
        return self.elasticity.parameter(label)


class ScalarConductance(Material):
    """Single nonnegative conductance, e.g. a Darcy mobility."""

    def __init__(self, value):
        self.value = float(value)
        if self.value < 0.0:
            raise MaterialError("conductance must be nonnegative")

    def parameter(self, label):
        if label == "Conductance":
            return self.value
        self._unanswered("parameter(%r)" % label)


class Density(Material):
    """Mass density, used by transient terms and body forces."""

    def __init__(self, value):
        self.value = float(value)
        if self.value < 0.0:
            raise MaterialError("density must be nonnegative")

    def parameter(self, label):
        if label == "Density":
            return self.value
        self._unanswered("parameter(%r)" % label)


def create_material(kind, args=(), body=()):
    """Build a material from deck tokens.

    `args` are the tokens following the kind on its own line; `body` is a
    sequence of token lists for the indented lines of a block material.
    """
    if kind == "LinearIsotropicElasticity":
        if not args:
            raise MaterialError("LinearIsotropicElasticity needs a mode")
        return LinearIsotropicElasticity(args[0], *map(float, args[1:]))
    if kind == "QuadraticDegradation":
        if args:
            raise MaterialError("QuadraticDegradation takes no parameters")
        return QuadraticDegradation()
    if kind == "ScalarConductance":
        if len(args) != 1:
            raise MaterialError("ScalarConductance takes a single value")
        return ScalarConductance(float(args[0]))
    if kind == "Density":
        if len(args) != 1:
            raise MaterialError("Density takes a single value")
        return Density(float(args[0]))
    if kind == "AmorDamageModel":
        if args:
            raise MaterialError(
                "AmorDamageModel parameters belong on indented lines")
        elasticity = degradation = None
        threshold = 1.0
        for line in body:
            name, rest = line[0], line[1:]
            if name == "LinearIsotropicElasticity":
                elasticity = create_material(name, rest)
            elif name == "QuadraticDegradation":
                degradation = create_material(name, rest)
            elif name == "IrreversibilityThreshold":
                if len(rest) != 1:
                    raise MaterialError(
                        "IrreversibilityThreshold takes a single value")
                threshold = float(rest[0])
            else:
                raise MaterialError(
                    "unknown AmorDamageModel entry %r" % (name,))
        return AmorDamageModel(elasticity, degradation, threshold)
    raise MaterialError("unknown material kind %r" % (kind,))
