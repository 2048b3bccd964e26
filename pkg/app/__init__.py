"""HomodyneQKD — coherent-state QPSK BB84 with balanced homodyne detection"""
