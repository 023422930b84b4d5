# Analysis, simulation and plumbing utilities
