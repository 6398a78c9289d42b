#!/usr/bin/env python3
"""Rasterize printable ASCII from a monospace TTF into a 1-bit glyph table.

Writes a C++ include consumed by src/raster.cpp. Rerun only when changing
the caption font:  python3 scripts/gen_font.py > src/font_glyphs.inc
"""
import sys
from PIL import Image, ImageDraw, ImageFont

FONT = "/usr/share/fonts/truetype/dejavu/DejaVuSansMono.ttf"
W, H = 8, 14

font = ImageFont.truetype(FONT, 12)
print("// Generated by scripts/gen_font.py from DejaVu Sans Mono 12px. Do not edit.")
print(f"constexpr int kGlyphWidth = {W};")
print(f"constexpr int kGlyphHeight = {H};")
print("constexpr unsigned char kGlyphRows[95][%d] = {" % H)
for code in range(32, 127):
    img = Image.new("L", (W, H), 0)
    d = ImageDraw.Draw(img)
    d.text((0, 0), chr(code), font=font, fill=255)
    rows = []
    for y in range(H):
        bits = 0
        for x in range(W):
            if img.getpixel((x, y)) >= 110:
                bits |= 0x80 >> x
        rows.append("0x%02x" % bits)
    print("    {" + ", ".join(rows) + "},  // %r" % chr(code))
print("};")
