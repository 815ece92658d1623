# defaultlab/__init__.py
"""
Моменты дефолта на конечных фильтрованных вероятностных пространствах:
разложение на шоки и идиосинкратическую часть, супермартингал Азема,
конструктивное построение момента дефолта и оценка дефолтных требований.
"""

__version__ = "0.4.0"
