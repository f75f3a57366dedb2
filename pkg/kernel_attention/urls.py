"""
URL configuration for the kernel attention lab.

Only the admin is routed; it browses the experiment run ledger.
"""
from django.contrib import admin
from django.urls import path

urlpatterns = [
    path('admin/', admin.site.urls),
]
