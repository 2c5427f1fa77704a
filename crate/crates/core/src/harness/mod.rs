//! Experiment drivers, configuration and reproducible output.
