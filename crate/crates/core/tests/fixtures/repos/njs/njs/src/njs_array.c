#include <stdlib.h>
#include <string.h>

#include "njs_value.h"

#define NJS_ARRAY_SPARE      8
#define NJS_ARRAY_MAX_LENGTH 0x7fffffff

#define njs_array_len(array)   ((array)->length)
#define njs_array_start(array) ((array)->start)

static const njs_value_t  njs_array_invalid = { NJS_INVALID, { 0 } };


njs_array_t *
njs_array_alloc(uint32_t length)
{
    uint32_t     size;
    njs_array_t  *array;

    array = malloc(sizeof(njs_array_t));
    if (array == NULL) {
        return NULL;
    }

    size = length + NJS_ARRAY_SPARE;

    array->start = calloc(size, sizeof(njs_value_t));
    if (array->start == NULL) {
        free(array);
        return NULL;
    }

    array->length = length;
    array->size = size;

    return array;
}


void
njs_array_destroy(njs_array_t *array)
{
    if (array != NULL) {
        free(array->start);
        free(array);
    }
}


int
njs_array_expand(njs_array_t *array, uint32_t append)
{
    uint32_t     size;
    njs_value_t  *start;

    size = array->length + append;

    if (size <= array->size) {
        return NJS_OK;
    }

    if (size > NJS_ARRAY_MAX_LENGTH) {
        return NJS_ERROR;
    }

    size += NJS_ARRAY_SPARE;

    start = realloc(array->start, size * sizeof(njs_value_t));
    if (start == NULL) {
        return NJS_ERROR;
    }

    array->start = start;
    array->size = size;

    return NJS_OK;
}


int
njs_array_add(njs_array_t *array, const njs_value_t *value)
{
    int  ret;

    ret = njs_array_expand(array, 1);
    if (ret != NJS_OK) {
        return ret;
    }

    array->start[array->length++] = *value;

    return NJS_OK;
}


void
njs_array_fill_invalid(njs_array_t *array, uint32_t from)
{
    uint32_t  i;

    for (i = from; i < array->size; i++) {
        array->start[i] = njs_array_invalid;
    }
}


/*
 * Sparse array helpers.
 *
 *
 *
 *
 *
 *
 *
 *
 *
 *
 *
 *
 *
 *
 *
 *
 *
 *
 *
 *
 *
 *
 *
 *
 *
 *
 *
 *
 *
 */


int
njs_array_indexes(njs_array_t *array, njs_array_t *keys)
{
    uint32_t     i, length;
    njs_value_t  index;

    length = array->length;

    for (i = 0; i < length; i++) {
        if (njs_is_valid(&array->start[i])) {
            njs_uint32_to_string(&index, i);

            if (njs_array_add(keys, &index) != NJS_OK) {
                return NJS_ERROR;
            }
        }
    }

    return NJS_OK;
}


uint32_t
njs_array_count_valid(const njs_array_t *array)
{
    uint32_t  i, n;

    n = 0;

    for (i = 0; i < array->length; i++) {
        n += njs_is_valid(&array->start[i]);
    }

    return n;
}
