"""Core algorithms: geometry, street choice, greenery, accessibility, prescriptions and statistics"""
