"""Layered thin-film fracture energies, their reduced limit models, recovery
sequences, solvers and audits."""

from .fields import VectorField, parse_expr, parse_field
from .model import (CrackSurface3D, DelaminationRegion, Facet, KLDisplacement, KLPiece, LayeredDomain,
                    MaterialParams, PixelGrid, PlanarCrackSet, SubstrateLoad, load_config)

__version__ = "0.1.0"

__all__ = ["VectorField", "parse_expr", "parse_field", "CrackSurface3D", "DelaminationRegion", "Facet",
           "KLDisplacement", "KLPiece", "LayeredDomain", "MaterialParams", "PixelGrid", "PlanarCrackSet",
           "SubstrateLoad", "load_config"]
