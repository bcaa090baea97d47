"""
rydspec: Doppler-averaged steady-state spectroscopy of three-level Rydberg ladders.
"""
