"""UI package"""
