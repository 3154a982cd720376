from django.contrib import admin
from django.utils.html import format_html
from unfold.admin import ModelAdmin, TabularInline

from .models import Experiment, ResultRow, SweepCell
from .reports import format_flag, format_number


class SweepCellInline(TabularInline):
    model = SweepCell
    fields = ['scenario', 'n', 'seed', 'status', 'finished_at']
    readonly_fields = fields
    extra = 0
    can_delete = False
    show_change_link = True

    def has_add_permission(self, request, obj=None):
        return False


@admin.register(Experiment)
class ExperimentAdmin(ModelAdmin):
    list_display = ['name', 'kind', 'dataset', 'model_kind', 'progress', 'created_at']
    list_filter = ['kind', 'dataset', 'model_kind']
    search_fields = ['name', 'dataset']
    readonly_fields = ['created_at', 'updated_at']
    inlines = [SweepCellInline]

    @admin.display(description='Cells done')
    def progress(self, obj):
        total = obj.cells.count()
        done = obj.cells.filter(status=SweepCell.Status.DONE).count()
        return f"{done}/{total}"


@admin.register(SweepCell)
class SweepCellAdmin(ModelAdmin):
    list_display = ['experiment', 'scenario', 'n', 'seed', 'status_badge', 'finished_at']
    list_filter = ['status', 'scenario', 'experiment']
    readonly_fields = ['created_at', 'finished_at', 'error']

    @admin.action(description='Reset selected cells to pending')
    def reset_to_pending(self, request, queryset):
        for cell in queryset:
            cell.results.all().delete()
        queryset.update(status=SweepCell.Status.PENDING, error='', finished_at=None)

    actions = ['reset_to_pending']

    @admin.display(description='Status')
    def status_badge(self, obj):
        styles = {
            'pending': 'background-color: #FEF08A; color: #854D0E;',
            'done': 'background-color: #BBF7D0; color: #166534;',
            'failed': 'background-color: #FECACA; color: #991B1B;',
        }
        style = styles.get(obj.status, styles['pending']) + " min-width: 80px; justify-content: center;"
        return format_html(
            '<span class="inline-flex items-center px-3 py-1.5 rounded-full text-sm font-bold" style="{}">{}</span>',
            style,
            obj.get_status_display(),
        )


@admin.register(ResultRow)
class ResultRowAdmin(ModelAdmin):
    list_display = ['experiment', 'scenario', 'n', 'seed', 'metric', 'value_display', 'p_value_display', 'significant_display']
    list_filter = ['experiment', 'scenario', 'metric', 'significant']
    search_fields = ['metric', 'experiment__name']

    @admin.display(description='Value', ordering='value')
    def value_display(self, obj):
        return format_number(obj.value)

    @admin.display(description='p-value', ordering='p_value')
    def p_value_display(self, obj):
        return format_number(obj.p_value)

    @admin.display(description='Significant')
    def significant_display(self, obj):
        return format_flag(obj.significant) or '-'
