//! Holds the acceptance suite under `tests/`; see the README.
