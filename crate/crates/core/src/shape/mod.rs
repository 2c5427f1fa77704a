//! Shape functionals of inclusion perturbations and their derivatives.
