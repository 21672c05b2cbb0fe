# Tile Composer: evolved tilemap generators and their recursive composition
__version__ = "1.0.0"
