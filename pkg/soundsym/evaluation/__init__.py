"""Effect classification, reporting and run comparison."""
