"""Formulation catalog: deck type names mapped to numerics classes."""

from .phasefield import PhaseFieldFracture, PlaneStrainElasticity
from .poro import BiotPoroelasticity
from .torsion import WarpingTorsion

NUMERICS_TYPES = {
    WarpingTorsion.DECK_NAME: WarpingTorsion,
    BiotPoroelasticity.DECK_NAME: BiotPoroelasticity,
    PhaseFieldFracture.DECK_NAME: PhaseFieldFracture,
    PlaneStrainElasticity.DECK_NAME: PlaneStrainElasticity,
}


def numerics_class(deck_name):
    try:
        return NUMERICS_TYPES[deck_name]
    except KeyError:
        raise KeyError("unknown numerics type %r; available: %s"
                       % (deck_name, ", ".join(sorted(NUMERICS_TYPES))))
