"""Map exports"""

from .choropleth import export_choropleth, render_svg, standardize

__all__ = ["export_choropleth", "render_svg", "standardize"]
