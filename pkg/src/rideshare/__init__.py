"""Ride-sharing potential of commuter populations under spatial, temporal and social constraints."""
from .endpoints import Assignment, MatchConstraints, solve_endpoints
from .enroute import RouteGrid, enroute_solve
from .geo import GeoPoint
from .pipeline import solve
from .population import CityConfig, Commuter, generate_city, preset

__all__ = ["Assignment", "CityConfig", "Commuter", "GeoPoint", "MatchConstraints", "RouteGrid",
           "enroute_solve", "generate_city", "preset", "solve", "solve_endpoints"]
__version__ = "0.1.0"
