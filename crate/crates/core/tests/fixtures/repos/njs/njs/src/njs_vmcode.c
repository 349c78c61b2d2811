#include <stdlib.h>

#include "njs_value.h"

#define NJS_VMCODE_STOP  0xff

typedef struct njs_property_next_s  njs_property_next_t;

struct njs_property_next_s {
    uint32_t    index;
    njs_array_t *array;
};

enum njs_vmcode_operation_e {
    NJS_VMCODE_PROPERTY_INIT = 0,
    NJS_VMCODE_PROPERTY_NEXT,
    NJS_VMCODE_PROPERTY_DONE,
};

static uint32_t  njs_vmcode_steps;


njs_property_next_t *
njs_property_next_create(njs_array_t *keys)
{
    njs_property_next_t  *next;

    next = malloc(sizeof(njs_property_next_t));
    if (next == NULL) {
        return NULL;
    }

    next->index = 0;
    next->array = keys;

    return next;
}


int
njs_vmcode_property_next(njs_property_next_t *next, njs_value_t *retval)
{
    njs_value_t  *value;

    njs_vmcode_steps++;

    while (next->index < next->array->length) {
        value = &next->array->start[next->index++];

        if (njs_is_valid(value)) {
            *retval = *value;
            return NJS_OK;
        }
    }

    return NJS_DECLINED;
}


void
njs_property_next_destroy(njs_property_next_t *next)
{
    if (next != NULL) {
        njs_array_destroy(next->array);
        free(next);
    }
}


uint32_t
njs_vmcode_total_steps(void)
{
    return njs_vmcode_steps;
}
