"""Pydantic schemas for measures, profiles and reports."""
