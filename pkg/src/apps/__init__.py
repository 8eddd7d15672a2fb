"""Applications package"""
