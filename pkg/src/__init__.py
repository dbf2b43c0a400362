"""
Voxrec: renderizado volumétrico diferenciable y reconstrucción 3D adversaria.
"""
