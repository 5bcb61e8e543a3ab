"""Core engine: tube model, energy, grouping, scheduling, tracking, rendering and IO"""
