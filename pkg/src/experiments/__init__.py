"""Experiments package"""
