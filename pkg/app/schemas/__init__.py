"""HomodyneQKD — Pydantic Schemas"""
