"""MAP fitting, NUTS sampling, diagnostics and PSIS-LOO."""
