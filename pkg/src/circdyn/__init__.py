"""Numerical toolkit for smooth group actions on the circle: exact PSL(2,Z)
and Thompson T arithmetic, distortion estimates, expansion procedures,
conformal measures and random-walk estimators."""

__version__ = "0.1.0"
