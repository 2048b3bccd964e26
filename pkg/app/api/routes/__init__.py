"""
HomodyneQKD — API Routes
"""
