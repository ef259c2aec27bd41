"""Cover times of planar random walks with wired boundary: exact Green-function
quantities, Gaussian free field sampling, continuous-time walk simulation and
the one-dimensional compound laws behind the downcrossing analysis."""

__version__ = "0.1.0"
