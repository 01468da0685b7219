"""
GSN随机场工具
广义偏正态分布、偏正态随机场模拟、尺度-形状混合场矩公式与尾部相依诊断
"""

__version__ = "1.0.0"
