__author__ = "Thorin Schiffer"
